"""Command-line front end: run scenarios, compare runs, list built-ins.

Outputs are plain data files (CSV with 17 significant digits, JSON summaries)
meant for external plotting tools.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import invariants as inv
from .integrators import (
    IterationConfig,
    RunAbortedError,
    RunSummary,
    StepStats,
    adaptive_run,
    explicit_run,
    get_tableau,
)
from .model import ExtendedState, init_extended, pair_arrays
from .scenarios import BUILTIN, ScenarioSpec, get_scenario

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_ABORTED = 0, 2, 3

DRIFT_COLUMNS = [
    "t", "d_px", "d_py", "d_pz", "d_Lx", "d_Ly", "d_Lz", "d_Cx", "d_Cy", "d_Cz",
    "d_E", "max_c_dist", "max_c_recip", "max_drift",
]  # fmt: skip


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_columns(n: int) -> list[str]:
    cols = ["t"]
    cols += [f"{c}{i + 1}" for i in range(n) for c in "xyz"]
    cols += [f"{c}{i + 1}" for i in range(n) for c in "uvw"]
    I, J = pair_arrays(n)
    cols += [f"r_{i + 1}{j + 1}" for i, j in zip(I, J)]
    cols += [f"rho_{i + 1}{j + 1}" for i, j in zip(I, J)]
    return cols


def drift_row(rec: inv.DriftRecord) -> list[float]:
    return [
        rec.t, *rec.momentum, *rec.angular_momentum, *rec.com_integral, rec.energy_rho,
        float(np.max(rec.constraint_dist)), float(np.max(rec.constraint_recip)), rec.max_drift,
    ]  # fmt: skip


@dataclass
class RunConfig:
    scenario: ScenarioSpec
    scheme: str = "midpoint"
    dt: Optional[float] = None
    t_end: Optional[float] = None
    drift_tol: float = 1e-8
    residual_tol: float = 1e-12
    max_iters: int = 50
    max_halvings: int = 20
    output_path: Optional[str] = None
    sample_stride: int = 1

    def __post_init__(self):
        try:
            get_tableau(self.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.dt is None:
            self.dt = self.scenario.dt0
        if self.t_end is None:
            self.t_end = self.scenario.t_end
        self.dt, self.t_end = float(self.dt), float(self.t_end)
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_end >= 0:
            raise ConfigError("t_end must be non-negative")
        if self.sample_stride < 1:
            raise ConfigError("sample_stride must be >= 1")
        try:
            self.iteration_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def explicit(self) -> bool:
        return get_tableau(self.scheme).explicit

    def iteration_config(self) -> IterationConfig:
        return IterationConfig(self.max_iters, self.residual_tol, self.drift_tol, self.max_halvings)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["scenario"] = self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "RunConfig":
        d = dict(d)
        if "scenario" not in d:
            raise ConfigError("config has no 'scenario' entry")
        d["scenario"] = resolve_scenario(d.pop("scenario"), d.pop("scenario_args", None), base_dir)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def resolve_scenario(
    value: Union[str, dict, ScenarioSpec], args: Optional[dict] = None, base_dir: Optional[Path] = None
) -> ScenarioSpec:
    """A built-in name, a path to a scenario JSON file, or an inline scenario object."""
    if isinstance(value, ScenarioSpec):
        return value
    if isinstance(value, dict):
        try:
            return ScenarioSpec.from_dict(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad scenario: {exc}") from None
    if isinstance(value, str):
        if value in BUILTIN:
            try:
                return get_scenario(value, **(args or {}))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad arguments for scenario {value!r}: {exc}") from None
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if path.is_file():
            doc = _load_json(path)
            if "scenario" in doc:
                return resolve_scenario(doc["scenario"], doc.get("scenario_args"), path.parent)
            return resolve_scenario(doc)
        raise ConfigError(f"{value!r} is neither a built-in scenario {sorted(BUILTIN)} nor a file")
    raise ConfigError(f"cannot interpret scenario {value!r}")


def _load_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return doc


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    return RunConfig.from_dict(_load_json(path), base_dir=path.parent)


class Recorder:
    """Run sink: writes trajectory and drift CSV rows and keeps samples for comparisons.

    Every ``stride``-th accepted step is recorded, and the final step always is.
    """

    def __init__(self, reference: inv.InvariantVector, p, stride: int = 1, out_dir: Optional[Path] = None):
        self.reference = reference
        self.params = p
        self.stride = stride
        self.count = 0
        self.times: list[float] = []
        self.positions: list[np.ndarray] = []
        self.energy_drift: list[float] = []
        self._pending: Optional[ExtendedState] = None
        self._files = []
        self._traj = self._drift = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            n = p.n
            self._traj = self._open(out_dir / "trajectory.csv", trajectory_columns(n))
            self._drift = self._open(out_dir / "drift.csv", DRIFT_COLUMNS)

    def _open(self, path: Path, header: list[str]):
        fh = open(path, "w", encoding="utf-8", newline="")
        self._files.append(fh)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        return w

    def __call__(self, state: ExtendedState, stats: StepStats):
        self.count += 1
        if self.count % self.stride == 0:
            self._record(state)
            self._pending = None
        else:
            self._pending = state

    def _record(self, state: ExtendedState):
        rec = inv.drift(self.reference, inv.evaluate_all(state, self.params), t=state.t)
        self.times.append(state.t)
        self.positions.append(np.array(state.pos))
        self.energy_drift.append(rec.energy_rho)
        if self._traj is not None:
            self._traj.writerow([fmt(x) for x in state.to_vector()])
            self._drift.writerow([fmt(x) for x in drift_row(rec)])

    def close(self):
        if self._pending is not None:
            self._record(self._pending)
            self._pending = None
        for fh in self._files:
            fh.close()
        self._files = []


@dataclass
class RunResult:
    config: RunConfig
    summary: RunSummary
    recorder: Recorder
    aborted: bool = False

    def summary_dict(self) -> dict:
        d = self.summary.as_dict()
        d["scenario"] = self.config.scenario.name
        d["dt"] = self.config.dt
        d["t_end"] = self.config.t_end
        d["acceptance"] = "none (explicit scheme)" if self.config.explicit else "drift corridor"
        d["samples_written"] = len(self.recorder.times)
        return d


def run(config: RunConfig, out_dir: Optional[Path] = None) -> RunResult:
    spec = config.scenario
    p = spec.params
    s0 = init_extended(spec.initial, p)
    rec = Recorder(inv.evaluate_all(s0, p), p, config.sample_stride, out_dir)
    tab = get_tableau(config.scheme)
    t_end = max(config.t_end, spec.initial.t)
    aborted = False
    try:
        if tab.explicit:
            summary = explicit_run(spec.initial, t_end, config.dt, p, tab, sink=rec)
        else:
            summary = adaptive_run(s0, t_end, config.dt, tab, p, config.iteration_config(), sink=rec)
    except RunAbortedError as exc:
        summary, aborted = exc.summary, True
    finally:
        rec.close()
    result = RunResult(config, summary, rec, aborted)
    if out_dir is not None:
        with open(out_dir / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(result.summary_dict(), fh, indent=2, default=_json_default)
            fh.write("\n")
    return result


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def align(a: Recorder, b: Recorder, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Index pairs of samples whose times agree within ``tol * max(1, |t|)``."""
    pairs = []
    i = j = 0
    while i < len(a.times) and j < len(b.times):
        ta, tb = a.times[i], b.times[j]
        if abs(ta - tb) <= tol * max(1.0, abs(ta)):
            pairs.append((i, j))
            i += 1
            j += 1
        elif ta < tb:
            i += 1
        else:
            j += 1
    return pairs


def compare(cfg_a: RunConfig, cfg_b: RunConfig, out_dir: Optional[Path] = None) -> dict:
    pa, pb = cfg_a.scenario.params, cfg_b.scenario.params
    if pa != pb:
        raise ConfigError("runs describe different systems (body count, masses or gamma differ)")
    dirs = (out_dir / "a", out_dir / "b") if out_dir is not None else (None, None)
    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_a = pool.submit(run, cfg_a, dirs[0])
        fut_b = pool.submit(run, cfg_b, dirs[1])
        ra, rb = fut_a.result(), fut_b.result()
    pairs = align(ra.recorder, rb.recorder)
    rows = []
    for i, j in pairs:
        dev = np.linalg.norm(ra.recorder.positions[i] - rb.recorder.positions[j], axis=1).max()
        rows.append((ra.recorder.times[i], ra.recorder.energy_drift[i], rb.recorder.energy_drift[j], dev))
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    report = {
        "a": ra.summary_dict(),
        "b": rb.summary_dict(),
        "aligned_samples": len(rows),
        "max_energy_drift_a": float(np.abs(arr[:, 1]).max(initial=0.0)),
        "max_energy_drift_b": float(np.abs(arr[:, 2]).max(initial=0.0)),
        "final_energy_drift_a": float(arr[-1, 1]) if rows else None,
        "final_energy_drift_b": float(arr[-1, 2]) if rows else None,
        "max_trajectory_deviation": float(arr[:, 3].max(initial=0.0)),
        "final_separation": float(arr[-1, 3]) if rows else None,
        "final_time": float(arr[-1, 0]) if rows else None,
        "aborted": [ra.aborted, rb.aborted],
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "dE_a", "dE_b", "max_position_deviation"])
            w.writerows([[fmt(x) for x in row] for row in rows])
        with open(out_dir / "comparison.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report, fh, indent=2, default=_json_default)
            fh.write("\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conservative-nbody",
        description="Integral-preserving Runge-Kutta integration of the gravitational N-body problem.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario and write trajectory/drift CSV files")
    sim.add_argument("--config", help="JSON run config; flags below override its fields")
    sim.add_argument("--scenario", help="built-in name or path to a scenario JSON file")
    sim.add_argument("--scheme", choices=["midpoint", "gauss2", "gauss3", "rk4"])
    sim.add_argument("--dt", type=float)
    sim.add_argument("--t-end", type=float, dest="t_end")
    sim.add_argument("--drift-tol", type=float, dest="drift_tol")
    sim.add_argument("--residual-tol", type=float, dest="residual_tol")
    sim.add_argument("--max-iters", type=int, dest="max_iters")
    sim.add_argument("--max-halvings", type=int, dest="max_halvings")
    sim.add_argument("--out", dest="output_path")
    sim.add_argument("--stride", type=int, dest="sample_stride")

    cmp_ = sub.add_parser("compare", help="run two configs and compare energy drift and trajectories")
    cmp_.add_argument("--a", required=True, help="JSON run config A")
    cmp_.add_argument("--b", required=True, help="JSON run config B")
    cmp_.add_argument("--out", required=True)

    ls = sub.add_parser("list-scenarios", help="show built-in scenarios")
    ls.add_argument("--json", action="store_true", help="dump full scenario specs as JSON")
    return parser


_OVERRIDES = ("scheme", "dt", "t_end", "drift_tol", "residual_tol", "max_iters", "max_halvings", "output_path", "sample_stride")


def _simulate_config(ns) -> RunConfig:
    doc: dict = {}
    base = None
    if ns.config:
        doc = _load_json(Path(ns.config))
        base = Path(ns.config).parent
    if ns.scenario:
        doc["scenario"] = ns.scenario
        doc.pop("scenario_args", None)
        base = None
    for key in _OVERRIDES:
        val = getattr(ns, key)
        if val is not None:
            doc[key] = val
    if "scenario" not in doc:
        raise ConfigError("no scenario given (use --scenario or --config)")
    return RunConfig.from_dict(doc, base_dir=base)


def cmd_simulate(ns) -> int:
    try:
        config = _simulate_config(ns)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(config.output_path) if config.output_path else Path("out")
    result = run(config, out)
    json.dump(result.summary_dict(), sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")
    if result.aborted:
        print(f"run aborted: {result.summary.abort_reason}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def cmd_compare(ns) -> int:
    try:
        cfg_a, cfg_b = load_config(ns.a), load_config(ns.b)
        report = compare(cfg_a, cfg_b, Path(ns.out))
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    json.dump(report, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")
    return EXIT_ABORTED if any(report["aborted"]) else EXIT_OK


def cmd_list_scenarios(ns) -> int:
    specs = {name: get_scenario(name) for name in BUILTIN}
    if ns.json:
        json.dump({name: spec.to_dict() for name, spec in specs.items()}, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return EXIT_OK
    for name, spec in specs.items():
        p = spec.params
        print(f"{name:<10} n={p.n} masses={p.masses.tolist()} gamma={p.gamma:g} dt0={spec.dt0:g} t_end={spec.t_end:g}")
        print(f"{'':<10} {spec.notes}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": cmd_simulate, "compare": cmd_compare, "list-scenarios": cmd_list_scenarios}
    return handlers[ns.command](ns)


if __name__ == "__main__":
    sys.exit(main())
