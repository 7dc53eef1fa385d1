"""
Command-line front end.

Each subcommand reads a flat JSON config (every field optional, defaults
below), writes plot-ready CSV/JSON into ``--out`` and a ``manifest.json``
recording the resolved config, seeds, tolerances and output digests.

Exit status: 0 when every check passed, 1 when a check failed, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import statistics
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bell import evaluate_witness, evolve_ensemble
from .io import RunManifest, write_csv, write_json
from .preparations import (
    BlochVector,
    emulate_shots,
    negativity_cost,
    shot_noise_scan,
    signed_decomposition,
)
from .schmidt import horodecki_max
from .search import (
    BenchmarkNotFound,
    SearchConfig,
    WitnessRecord,
    benchmark_scan_r,
    build_benchmark,
    coarse_search,
    discover_benchmark_direction,
    finite_time_sweep,
    scan_witness,
)
from .tables import JointTable
from .walk import position_distribution

TSIRELSON = 2.0 * math.sqrt(2.0)


class ConfigError(ValueError):
    pass


# --- configs -----------------------------------------------------------------
# Field metadata "kind" drives validation of JSON values.


def _f(default, kind, **kw):
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata={"kind": kind, **kw})
    return field(default=default, metadata={"kind": kind, **kw})


@dataclass
class BenchmarkConfig:
    T: int = _f(60, "int", min=1)
    direction: Optional[list] = _f(None, "vec3?")
    target_coeffs: list = _f([0.843, 0.538], "floats", length=2)
    match_tol: float = _f(0.005, "float", min=0.0)
    witness_r_norm: float = _f(1.45, "float", min=0.0)
    n_dirs: int = _f(10_000, "int", min=1)
    seed: int = _f(0, "int", min=0)
    tol: float = _f(1e-9, "float", min=0.0)
    saturation_tol: float = _f(1e-6, "float", min=0.0)


@dataclass
class ScanRConfig:
    T: int = _f(60, "int", min=1)
    direction: Optional[list] = _f(None, "vec3?")
    target_coeffs: list = _f([0.843, 0.538], "floats", length=2)
    match_tol: float = _f(0.005, "float", min=0.0)
    r_grid: list = _f([round(0.05 * k, 10) for k in range(41)], "floats", nonempty=True)
    witness_r_norms: list = _f([1.45], "floats")
    n_dirs: int = _f(10_000, "int", min=1)
    seed: int = _f(0, "int", min=0)
    tol: float = _f(1e-9, "float", min=0.0)


@dataclass
class CoarseConfig:
    T: int = _f(60, "int", min=1)
    r_norm: float = _f(1.45, "float", min=0.0)
    n_trials: int = _f(20_000, "int", min=1)
    seeds: list = _f(list(range(8)), "ints", nonempty=True)
    x0_grid: Optional[list] = _f(None, "ints?")
    x0_ratios: Optional[list] = _f([0.6], "floats?")
    tol: float = _f(1e-9, "float", min=0.0)
    sign_of_zero: int = _f(1, "int")


@dataclass
class FiniteTimeConfig:
    T_list: list = _f([2, 4, 6, 8, 10], "ints", nonempty=True)
    r_norm: float = _f(1.45, "float", min=0.0)
    n_trials: int = _f(100_000, "int", min=1)
    seeds: list = _f(list(range(8)), "ints", nonempty=True)
    x0_grid: Optional[list] = _f(None, "ints?")
    x0_ratios: Optional[list] = _f(None, "floats?")
    tol: float = _f(1e-9, "float", min=0.0)
    sign_of_zero: int = _f(1, "int")


@dataclass
class EmulateConfig:
    witness: Optional[str] = _f(None, "str?")
    T: int = _f(60, "int", min=1)
    direction: Optional[list] = _f(None, "vec3?")
    target_coeffs: list = _f([0.843, 0.538], "floats", length=2)
    match_tol: float = _f(0.005, "float", min=0.0)
    n_dirs: int = _f(10_000, "int", min=1)
    r_norm: float = _f(1.45, "float", min=0.0)
    baseline_r_norm: float = _f(1.0, "float", min=0.0)
    shot_budgets: list = _f([1000, 3000, 10_000, 30_000, 100_000], "ints", nonempty=True)
    n_repeats: int = _f(400, "int", min=2)
    closure_shots: int = _f(1_000_000, "int", min=1)
    seed: int = _f(0, "int", min=0)
    tol: float = _f(1e-9, "float", min=0.0)
    closure_tol: float = _f(1e-12, "float", min=0.0)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _check_value(name: str, v, meta: dict):
    kind = meta["kind"]
    if kind.endswith("?"):
        if v is None:
            return None
        kind = kind[:-1]
    bad = lambda what: ConfigError(f"field '{name}': expected {what}, got {v!r}")  # noqa: E731
    if kind == "int":
        if not _is_int(v):
            raise bad("an integer")
    elif kind == "float":
        if not _is_num(v):
            raise bad("a finite number")
        v = float(v)
    elif kind == "str":
        if not isinstance(v, str):
            raise bad("a string")
    elif kind in ("ints", "floats", "vec3"):
        if not isinstance(v, list):
            raise bad("a list")
        ok = _is_int if kind == "ints" else _is_num
        if not all(ok(x) for x in v):
            raise bad("a list of integers" if kind == "ints" else "a list of numbers")
        if kind != "ints":
            v = [float(x) for x in v]
        if kind == "vec3" and (len(v) != 3 or np.linalg.norm(v) == 0):
            raise bad("a nonzero 3-vector")
        if meta.get("nonempty") and not v:
            raise ConfigError(f"field '{name}': must not be empty")
        if "length" in meta and len(v) != meta["length"]:
            raise bad(f"a list of length {meta['length']}")
    if "min" in meta:
        for x in v if isinstance(v, list) else [v]:
            if x < meta["min"]:
                raise ConfigError(f"field '{name}': value {x!r} is below {meta['min']}")
    return v


def load_config(cls, path: Optional[str]):
    """Build ``cls`` from a JSON file, naming the offending field or line on error."""
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(f"field '{key}': unknown for this subcommand")
    cfg = cls()
    for name, value in data.items():
        setattr(cfg, name, _check_value(name, value, fields[name].metadata))
    return cfg


def apply_overrides(cfg, seed_override: Optional[int], tol: Optional[float]):
    """``--seed-override N`` sets a single seed to N, or shifts a seed list to N, N+1, ..."""
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError("--seed-override must be nonnegative")
        if hasattr(cfg, "seeds"):
            cfg.seeds = [seed_override + k for k in range(len(cfg.seeds))]
        else:
            cfg.seed = seed_override
    if tol is not None:
        if not (math.isfinite(tol) and tol >= 0):
            raise ConfigError("--tol must be a nonnegative number")
        cfg.tol = tol
    return cfg


# --- helpers -----------------------------------------------------------------


def _benchmark(cfg):
    """Benchmark settings from an explicit direction or from discovery."""
    if cfg.direction is not None:
        d = np.asarray(cfg.direction, dtype=float)
        return build_benchmark(cfg.T, d / np.linalg.norm(d)), None
    match = discover_benchmark_direction(cfg.T, tuple(cfg.target_coeffs), cfg.match_tol)
    return build_benchmark(cfg.T, match.direction), match


def _position_rows(rec: WitnessRecord):
    ens = signed_decomposition(rec.prep)
    dist = position_distribution(evolve_ensemble(ens, rec.T))
    return list(zip(dist.positions, dist.probabilities))


def _tables_by_branch(rec: WitnessRecord):
    """Exact per-branch tables (pure +r_hat and -r_hat preparations) and weights."""
    A, B = rec.observables()
    plus = evaluate_witness(BlochVector.from_direction(rec.prep_dir, 1.0), A, B, rec.T, rec.tol)[1]
    minus = evaluate_witness(BlochVector.from_direction(rec.prep_dir, -1.0), A, B, rec.T, rec.tol)[1]
    w_plus = (1.0 + rec.r_norm) / 2.0
    return plus, minus, (w_plus, 1.0 - w_plus)


# --- subcommands -------------------------------------------------------------


def cmd_benchmark(cfg: BenchmarkConfig, out: Path, man: RunManifest):
    man.seeds = [cfg.seed]
    man.tolerances = {"tol": cfg.tol, "match_tol": cfg.match_tol, "saturation_tol": cfg.saturation_tol}
    try:
        bench, match = _benchmark(cfg)
    except BenchmarkNotFound as exc:
        n = exc.nearest
        path = write_json(
            out / "benchmark.json",
            {
                "found": False,
                "message": str(exc),
                "nearest_direction": n.direction,
                "nearest_label": n.label,
                "nearest_coeffs": n.schmidt.coefficients,
                "deviation": n.deviation,
            },
        )
        man.add_output(path, out)
        man.checks["benchmark_found"] = False
        return
    sd, st = bench.schmidt, bench.settings
    S_max = horodecki_max(sd.s0, sd.s1)
    sat_err = abs(st.achieved_S - S_max)
    man.checks["saturation"] = sat_err <= cfg.saturation_tol

    rec = scan_witness(bench, cfg.witness_r_norm, cfg.n_dirs, cfg.seed, cfg.tol)
    summary = {
        "found": True,
        "T": cfg.T,
        "direction": bench.direction,
        "direction_label": match.label if match else "config",
        "coefficients": sd.coefficients,
        "coefficient_deviation": match.deviation if match else None,
        "schmidt": sd.to_dict(),
        "S_max": S_max,
        "achieved_S": st.achieved_S,
        "saturation_error": sat_err,
        "refined": st.refined,
        "mu": st.angle,
        "alice_dirs": [a.bloch_dir for a in bench.coin_dirs],
        "witness_r_norm": cfg.witness_r_norm,
        "witness_S": rec.report.S if rec else None,
        "witness_min_p": rec.report.min_p if rec else None,
    }
    man.add_output(write_json(out / "benchmark.json", summary), out)
    if rec is not None:
        man.add_output(write_json(out / "witness.json", rec.to_dict()), out)
        man.add_output(write_csv(out / "fig4_position_distribution.csv", ["x", "P"], _position_rows(rec)), out)
    man.checks["witness_found"] = rec is not None


def cmd_scan_r(cfg: ScanRConfig, out: Path, man: RunManifest):
    man.seeds = [cfg.seed]
    man.tolerances = {"tol": cfg.tol, "match_tol": cfg.match_tol}
    try:
        bench, _ = _benchmark(cfg)
    except BenchmarkNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.checks["benchmark_found"] = False
        return
    pts = benchmark_scan_r(bench, cfg.r_grid, cfg.n_dirs, cfg.seed, cfg.tol)
    rows = [(p.r_norm, p.best_S, p.min_p) for p in pts]
    header = ["r_norm", "best_S", "min_p"]
    man.add_output(write_csv(out / "fig2_S_vs_r.csv", header, rows), out)
    man.add_output(write_csv(out / "fig3_minp_vs_r.csv", header, rows), out)
    refs = [("classical", 2.0), ("tsirelson", TSIRELSON), ("algebraic", 4.0)]
    man.add_output(write_csv(out / "fig2_reference_lines.csv", ["name", "S"], refs), out)
    # the quantum regime must respect the Tsirelson ceiling
    man.checks["tsirelson"] = all(
        p.best_S <= TSIRELSON + cfg.tol for p in pts if p.r_norm <= 1.0 and not math.isnan(p.best_S)
    )
    for rn in cfg.witness_r_norms:
        rec = scan_witness(bench, rn, cfg.n_dirs, cfg.seed, cfg.tol)
        if rec is not None:
            man.add_output(write_json(out / f"witness_r{rn:g}.json", rec.to_dict()), out)


def _search_config(cfg, T) -> SearchConfig:
    return SearchConfig(
        T=T, r_norm=cfg.r_norm, n_trials=cfg.n_trials, seeds=list(cfg.seeds),
        x0_grid=cfg.x0_grid, x0_ratios=cfg.x0_ratios, tol=cfg.tol, sign_of_zero=cfg.sign_of_zero,
    )


def cmd_coarse(cfg: CoarseConfig, out: Path, man: RunManifest):
    man.seeds = list(cfg.seeds)
    man.tolerances = {"tol": cfg.tol}
    scfg = _search_config(cfg, cfg.T)
    try:
        scfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = coarse_search(scfg)
    cells = [
        (c.seed, c.x0, c.n_trials, c.n_accepted, c.n_gt2, c.best_S, c.min_p, c.trial) for c in res.cells
    ]
    man.add_output(
        write_csv(
            out / "coarse_cells.csv",
            ["seed", "x0", "n_trials", "n_accepted", "n_gt2", "best_S", "min_p", "trial"],
            cells,
        ),
        out,
    )
    man.checks["witness_found"] = res.best is not None
    if res.best is None:
        return
    rec = res.best
    man.add_output(write_json(out / "table1_witness.json", rec.to_dict()), out)
    man.add_output(write_csv(out / "fig5_position_distribution.csv", ["x", "P"], _position_rows(rec)), out)
    if cfg.r_norm <= 1.0:
        man.checks["tsirelson"] = rec.abs_S <= TSIRELSON + cfg.tol


def cmd_finite_time(cfg: FiniteTimeConfig, out: Path, man: RunManifest):
    man.seeds = list(cfg.seeds)
    man.tolerances = {"tol": cfg.tol}
    base = _search_config(cfg, max(cfg.T_list))
    for T in cfg.T_list:
        try:
            dataclasses.replace(base, T=T).validate()
        except ValueError as exc:
            raise ConfigError(f"T={T}: {exc}") from None
    sweep = finite_time_sweep(cfg.T_list, cfg.r_norm, base)
    fig6 = []
    for row in sweep.rows:
        for seed, (S, x0, mp) in sorted(row.per_seed.items()):
            fig6.append((row.T, seed, S, x0, mp))
    man.add_output(write_csv(out / "fig6_S_vs_T.csv", ["T", "seed", "best_S", "x0", "min_p"], fig6), out)
    man.add_output(
        write_csv(
            out / "fig6_summary.csv",
            ["T", "best_S", "median_S"],
            [(r.T, r.best_S, r.median_S) for r in sweep.rows],
        ),
        out,
    )
    man.add_output(
        write_csv(
            out / "fig7_fraction_gt2.csv",
            ["T", "n_accepted", "n_gt2", "fraction_gt2"],
            [(r.T, r.n_accepted, r.n_gt2, r.fraction_gt2) for r in sweep.rows],
        ),
        out,
    )
    man.add_output(
        write_csv(
            out / "fig8_minp_vs_T.csv",
            ["T", "median_min_p", "best_min_p"],
            [(r.T, r.median_min_p, r.best.report.min_p if r.best else math.nan) for r in sweep.rows],
        ),
        out,
    )
    for r in sweep.rows:
        if r.best is not None:
            man.add_output(write_json(out / f"witness_T{r.T}.json", r.best.to_dict()), out)
    man.checks["fractions_in_unit_interval"] = all(0.0 <= r.fraction_gt2 <= 1.0 for r in sweep.rows)


def cmd_emulate(cfg: EmulateConfig, out: Path, man: RunManifest):
    man.seeds = [cfg.seed]
    man.tolerances = {"tol": cfg.tol, "closure_tol": cfg.closure_tol}
    if cfg.witness is not None:
        try:
            rec = WitnessRecord.from_dict(json.loads(Path(cfg.witness).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"field 'witness': cannot load witness record: {exc}") from None
    else:
        try:
            bench, _ = _benchmark(cfg)
        except BenchmarkNotFound as exc:
            print(f"error: {exc}", file=sys.stderr)
            man.checks["benchmark_found"] = False
            return
        rec = scan_witness(bench, cfg.r_norm, cfg.n_dirs, cfg.seed, cfg.tol)
        if rec is None:
            man.checks["witness_found"] = False
            return
        man.add_output(write_json(out / "witness.json", rec.to_dict()), out)

    plus, minus, weights = _tables_by_branch(rec)
    direct = rec.reevaluate()[1]
    recombined = JointTable(weights[0] * plus.p + weights[1] * minus.p, rec.tol)
    closure = float(np.max(np.abs(recombined.p - direct.p)))
    man.checks["closure"] = closure <= cfg.closure_tol

    emu = emulate_shots(plus, minus, weights, cfg.closure_shots, cfg.seed)
    man.add_output(
        write_json(
            out / "emulation.json",
            {
                "r_norm": rec.r_norm,
                "weights": weights,
                "negativity_cost": negativity_cost(rec.prep),
                "exact_S": direct.chsh(),
                "closure_error": closure,
                "shots_per_branch": cfg.closure_shots,
                "emulated_S": emu.S,
                "emulated_S_stderr": emu.S_stderr,
                "emulated_table": emu.table.to_dict(),
            },
        ),
        out,
    )

    rows = shot_noise_scan(plus, minus, weights, cfg.shot_budgets, cfg.n_repeats, cfg.seed)
    # baseline: same direction and settings at the reference magnitude
    wb = (1.0 + cfg.baseline_r_norm) / 2.0
    base = shot_noise_scan(plus, minus, (wb, 1.0 - wb), cfg.shot_budgets, cfg.n_repeats, cfg.seed)
    out_rows = [
        (
            r["n_shots"], r["shots_plus"], r["shots_minus"], r["mean_S"], r["var_S"], r["nominal_var"],
            b["var_S"], r["var_S"] / b["var_S"],
        )
        for r, b in zip(rows, base)
    ]
    man.add_output(
        write_csv(
            out / "emulation_variance.csv",
            ["n_shots", "shots_plus", "shots_minus", "mean_S", "var_S", "nominal_var", "baseline_var_S", "ratio"],
            out_rows,
        ),
        out,
    )
    if len(rows) >= 2:
        slope = float(np.polyfit(np.log([r["n_shots"] for r in rows]), np.log([r["var_S"] for r in rows]), 1)[0])
        man.checks["slope"] = abs(slope + 1.0) <= 0.1
        print(f"variance slope {slope:.4f}, median ratio {statistics.median(r[-1] for r in out_rows):.4f}")


COMMANDS = {
    "benchmark": (BenchmarkConfig, cmd_benchmark, "Schmidt benchmark, saturation check and witness"),
    "scan-r": (ScanRConfig, cmd_scan_r, "best |S| versus Bloch magnitude with benchmark settings"),
    "coarse": (CoarseConfig, cmd_coarse, "randomized search with threshold binnings"),
    "finite-time": (FiniteTimeConfig, cmd_finite_time, "coarse search across short walk durations"),
    "emulate": (EmulateConfig, cmd_emulate, "finite-shot emulation of a signed witness"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walkbell", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="JSON config; omitted fields take defaults")
        p.add_argument("--out", metavar="DIR", default=f"out/{name}", help="output directory")
        p.add_argument("--seed-override", metavar="N", type=int, help="replace the configured seed(s)")
        p.add_argument("--tol", metavar="X", type=float, help="admissibility/no-signaling tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cls, run, _ = COMMANDS[args.command]
    out = Path(args.out)
    try:
        cfg = apply_overrides(load_config(cls, args.config), args.seed_override, args.tol)
        man = RunManifest(args.command, dataclasses.asdict(cfg), __version__)
        man.started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)
        run(cfg, out, man)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    man.elapsed_s = time.perf_counter() - t0
    man.write(out)
    for name, ok in man.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
