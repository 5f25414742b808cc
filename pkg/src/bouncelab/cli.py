"""Command-line front end: ``bounce-lab simulate|find-orbits|twist-check|sweep``.

Every run is driven by a single JSON configuration file. Outputs are flat
JSON/CSV files whose floats are written with 17 significant digits, so the
same configuration always produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path
from typing import Any

from . import orbit_finder as of
from .errors import BounceLabError
from .forcing import ForcingProfile
from .impact_map import MapParams, VelocityState, simulate_bouncing
from .twist_analysis import twist_certificate
from .variational import GeneratingContext

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_THEORY = 3

CONFIG_HELP = f"""\
configuration file (JSON object):
  g                   gravitational acceleration, required, > 0
  forcing             {{"cos": [a0, a1, ...], "sin": [b1, ...]}}   default f = 0
  v_star              velocity threshold, default 4*||f'|| + 1
  keys                list of [p, q] with gcd(p, q) = 1     (find-orbits, sweep)
  initial_conditions  list of [t, v]                         (simulate)
  n_steps             number of impacts                      (simulate)
  tolerances          fixed_point={of.FIXED_POINT_TOL:g} dedup={of.DEDUP_TOL:g} parabolic={of.PARABOLIC_TOL:g}
                      morse_zero={of.MORSE_ZERO_TOL:g} singular_cond={of.SINGULAR_COND:g} curve={of.CURVE_TOL:g}
  grids               {{"sweep": [128, 64], "twist": 32}}
  probe               {{"enabled": true, "n_probe": 100, "horizon": 10000}}
  seed                integer seed for perturbation probes, default 0
  twist               {{"q": [1, 2, 3], "e_range": [5, 50]}}
  sweep               {{"amplitudes": [0.0, 0.01], "harmonic": 1}}
  out                 output directory, default "out" (overridden by --out)

exit codes: 0 success, 1 runtime failure, 2 configuration error,
            3 theory-violation diagnostic
"""


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    g: float
    forcing: ForcingProfile
    v_star: float | None = None
    keys: list[tuple[int, int]] = field(default_factory=list)
    initial_conditions: list[tuple[float, float]] = field(default_factory=list)
    n_steps: int = 0
    tolerances: of.Tolerances = of.DEFAULT_TOLERANCES
    sweep_grid: tuple[int, int] = (128, 64)
    twist_grid: int = 32
    probe: bool = True
    n_probe: int = 100
    horizon: int = 10_000
    seed: int = 0
    twist_q: list[int] = field(default_factory=lambda: [1, 2, 3])
    twist_e_range: tuple[float, float] = (5.0, 50.0)
    amplitudes: list[float] = field(default_factory=list)
    harmonic: int = 1
    out: Path = Path("out")

    def params(self, forcing: ForcingProfile | None = None) -> MapParams:
        return MapParams(forcing or self.forcing, g=self.g, v_star=self.v_star)


def _number(data: dict, name: str, default=None, *, positive: bool = False, integer: bool = False):
    if name not in data:
        if default is None:
            raise ConfigError(f"missing required field '{name}'")
        return default
    value = data[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{name}' must be a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise ConfigError(f"field '{name}' must be an integer, got {value!r}")
    if not math.isfinite(value) or (positive and not value > 0):
        raise ConfigError(f"field '{name}' must be positive and finite, got {value!r}")
    return int(value) if integer else float(value)


def _pairs(data: dict, name: str, cast) -> list[tuple]:
    value = data.get(name, [])
    if not isinstance(value, list) or not all(isinstance(v, list) and len(v) == 2 for v in value):
        raise ConfigError(f"field '{name}' must be a list of pairs")
    try:
        return [(cast(a), cast(b)) for a, b in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{name}': {exc}") from exc


def parse_config(data: Any) -> RunConfig:
    """Validate a decoded JSON document into a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    g = _number(data, "g", positive=True)
    forcing_data = data.get("forcing", {"cos": [0.0]})
    if not isinstance(forcing_data, dict) or set(forcing_data) - {"cos", "sin"}:
        raise ConfigError("field 'forcing' must be an object with keys 'cos' and 'sin'")
    try:
        forcing = ForcingProfile.from_dict(forcing_data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'forcing': {exc}") from exc
    v_star = _number(data, "v_star", positive=True) if "v_star" in data else None

    keys = _pairs(data, "keys", int)
    for p, q in keys:
        if p < 1 or q < 1:
            raise ConfigError(f"field 'keys': ({p}, {q}) must be positive")
        if gcd(p, q) != 1:
            raise ConfigError(f"field 'keys': ({p}, {q}) is not coprime")

    tol_data = data.get("tolerances", {})
    if not isinstance(tol_data, dict):
        raise ConfigError("field 'tolerances' must be an object")
    known = set(vars(of.DEFAULT_TOLERANCES))
    unknown = set(tol_data) - known
    if unknown:
        raise ConfigError(f"field 'tolerances': unknown entries {sorted(unknown)}")
    tol_values = {k: _number(tol_data, k, positive=True) for k in tol_data}
    tolerances = of.Tolerances(**tol_values)

    grids = data.get("grids", {})
    sweep_grid = tuple(grids.get("sweep", (128, 64)))
    if len(sweep_grid) != 2 or not all(isinstance(n, int) and n >= 4 for n in sweep_grid):
        raise ConfigError("field 'grids.sweep' must be two integers >= 4")
    twist_grid = grids.get("twist", 32)
    if not isinstance(twist_grid, int) or twist_grid < 2:
        raise ConfigError("field 'grids.twist' must be an integer >= 2")

    probe = data.get("probe", {})
    twist = data.get("twist", {})
    e_range = tuple(float(x) for x in twist.get("e_range", (5.0, 50.0)))
    if len(e_range) != 2 or not 0.0 < e_range[0] <= e_range[1]:
        raise ConfigError("field 'twist.e_range' must be [e_min, e_max] with 0 < e_min <= e_max")
    twist_q = [int(q) for q in twist.get("q", [1, 2, 3])]
    if not twist_q or min(twist_q) < 1:
        raise ConfigError("field 'twist.q' must list positive integers")
    sweep = data.get("sweep", {})
    amplitudes = [float(a) for a in sweep.get("amplitudes", [])]

    return RunConfig(
        g=g,
        forcing=forcing,
        v_star=v_star,
        keys=keys,
        initial_conditions=_pairs(data, "initial_conditions", float),
        n_steps=_number(data, "n_steps", 0, integer=True),
        tolerances=tolerances,
        sweep_grid=sweep_grid,
        twist_grid=twist_grid,
        probe=bool(probe.get("enabled", True)),
        n_probe=_number(probe, "n_probe", 100, positive=True, integer=True),
        horizon=_number(probe, "horizon", 10_000, positive=True, integer=True),
        seed=_number(data, "seed", 0, integer=True),
        twist_q=twist_q,
        twist_e_range=e_range,
        amplitudes=amplitudes,
        harmonic=_number(sweep, "harmonic", 1, positive=True, integer=True),
        out=Path(data.get("out", "out")),
    )


def load_config(path: str | Path) -> RunConfig:
    import json

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(data)


# ---------------------------------------------------------------------------
# deterministic output


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and 17-significant-digit floats (non-finite as null)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return dumps(obj.item(), indent, _level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: Path, obj: Any) -> None:
    path.write_text(dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    if not cfg.initial_conditions:
        raise ConfigError("field 'initial_conditions' is required for simulate")
    if cfg.n_steps < 1:
        raise ConfigError("field 'n_steps' must be a positive integer for simulate")
    params = cfg.params()
    for i, (t, v) in enumerate(cfg.initial_conditions):
        traj = simulate_bouncing(params, VelocityState(t, v), cfg.n_steps)
        traj.to_csv(out / f"trajectory_{i}.csv")
        flag = traj.first_grazing_step
        note = "" if flag is None else f", grazing from step {flag}"
        print(f"trajectory_{i}.csv: {cfg.n_steps} impacts from (t, v) = ({t:g}, {v:g}){note}")
    return EXIT_OK


def _search_record(result: of.OrbitSearchResult, params: MapParams) -> dict:
    return {
        "report": result.report.to_dict(),
        "existence_threshold": of.existence_threshold(params),
        "minimum": None if result.minimum is None else result.minimum.to_dict(),
        "minimax": None if result.minimax is None else result.minimax.to_dict(),
        "methods_agree": result.methods_agree,
        "probes": [p.to_dict() for p in result.probes],
        "birkhoff": [of.birkhoff_validate(o).passed for o in result.report.orbits],
        "notes": list(result.notes),
    }


def _summary(result: of.OrbitSearchResult) -> str:
    rep = result.report
    lines = [f"key (p, q) = ({rep.key.p}, {rep.key.q}): {rep.kind.value}, {len(rep.orbits)} orbit(s)"]
    if rep.kind == of.ReportKind.FINITE:
        lines.append(f"  {'t0':>12} {'e0':>12} {'class':>10} {'index':>5} {'trace':>12} {'action':>14}")
        for o in rep.orbits:
            lines.append(
                f"  {o.times[0]:12.8f} {o.energies[0]:12.8f} {o.stability.value:>10} "
                f"{o.morse_index:5d} {o.monodromy_trace:12.6f} {o.action:14.10f}"
            )
    else:
        lines.append(f"  curve residual {rep.curve_residual:.3e}, {len(rep.curve_samples)} samples")
    lines.extend(f"  note: {n}" for n in result.notes)
    if rep.theory_violation:
        lines.append("  THEORY VIOLATION: no unstable orbit in the reported set")
    return "\n".join(lines)


def cmd_find_orbits(cfg: RunConfig, out: Path) -> int:
    if not cfg.keys:
        raise ConfigError("field 'keys' must list at least one (p, q)")
    params = cfg.params()
    ctx = GeneratingContext(params)
    status = EXIT_OK
    for p, q in cfg.keys:
        key = of.OrbitKey(p, q)
        result = of.find_periodic_orbits(
            key,
            ctx,
            grid=cfg.sweep_grid,
            probe=cfg.probe,
            n_probe=cfg.n_probe,
            horizon=cfg.horizon,
            seed=cfg.seed,
            tol=cfg.tolerances,
        )
        write_json(out / f"orbits_p{p}_q{q}.json", _search_record(result, params))
        print(_summary(result))
        if result.report.theory_violation:
            status = EXIT_THEORY
    return status


def cmd_twist_check(cfg: RunConfig, out: Path) -> int:
    params = cfg.params()
    for q in cfg.twist_q:
        report = twist_certificate(params, q, cfg.twist_e_range, cfg.twist_grid)
        write_json(out / f"twist_q{q}.json", report.to_dict())
        report.write_csv(out / f"twist_q{q}.csv")
        verdict = "holds" if report.bound_holds else "fails"
        print(
            f"q={q}: max|f~_q| = {report.f_tilde_max:.6g} ({verdict}), "
            f"e^q threshold = {report.e_q_threshold}, method agreement = {report.method_agreement:.3e}"
        )
    return EXIT_OK


SWEEP_HEADER = ["amplitude", "p", "q", "kind", "n_orbits", "max_trace"]


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if not cfg.keys:
        raise ConfigError("field 'keys' must list at least one (p, q)")
    if not cfg.amplitudes:
        raise ConfigError("field 'sweep.amplitudes' must list at least one amplitude")
    rows = []
    status = EXIT_OK
    for amp in cfg.amplitudes:
        forcing = ForcingProfile.single_cosine(amp, cfg.harmonic)
        ctx = GeneratingContext(cfg.params(forcing))
        for p, q in cfg.keys:
            rep = of.sweep_enumerate(of.OrbitKey(p, q), ctx, cfg.sweep_grid, tol=cfg.tolerances)
            traces = [abs(o.monodromy_trace) for o in rep.orbits]
            rows.append([amp, p, q, rep.kind.value, len(rep.orbits), max(traces) if traces else math.nan])
            if rep.theory_violation:
                status = EXIT_THEORY
    with open(out / "sweep_index.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for amp, p, q, kind, n, tr in rows:
            writer.writerow([format_float(amp), p, q, kind, n, format_float(tr)])
            print(f"amplitude {amp:g}, key ({p}, {q}): {kind}, {n} orbit(s), max |trace| {tr:.6g}")
    return status


COMMANDS = {
    "simulate": cmd_simulate,
    "find-orbits": cmd_find_orbits,
    "twist-check": cmd_twist_check,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bounce-lab",
        description="Bouncing-ball map laboratory: simulate impacts and search for periodic orbits.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides the config's 'out')")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else cfg.out
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BounceLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
