"""
Randomized witness searches.

Random streams
--------------
Trials are grouped in blocks of :data:`BLOCK_SIZE`. Block ``b`` of seed ``s``
draws from ``default_rng(SeedSequence(s, spawn_key=(b,)))``, always a full
block in the order: preparation directions, Alice's first directions, Alice's
second directions. Trial ``t`` is row ``t % BLOCK_SIZE`` of block
``t // BLOCK_SIZE``. A trial's parameters therefore depend only on
``(seed, t)``: they do not change with the trial budget, the threshold grid,
or how blocks are distributed over worker processes. The same trial
parameters are reused for every threshold in a grid.
"""

from __future__ import annotations

import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bell import (
    CoinObservable,
    DiagonalBinning,
    ResponseSet,
    batch_probabilities,
    evaluate_witness,
    sign_binning,
    threshold_binning,
)
from .preparations import BlochVector, coin_state_from_direction
from .schmidt import (
    EmbeddedWalkerObservable,
    OptimalSettings,
    SchmidtData,
    embed_subspace_observable,
    optimal_chsh_settings,
    schmidt_decompose,
)
from .tables import DEFAULT_TOL, BellReport, JointTable
from .walk import evolve, init_walker_state

__all__ = [
    "BLOCK_SIZE",
    "WORKERS_ENV",
    "sample_unit_sphere",
    "draw_trials",
    "x0_from_ratio",
    "BenchmarkNotFound",
    "BenchmarkMatch",
    "discover_benchmark_direction",
    "SchmidtBenchmark",
    "build_benchmark",
    "WitnessRecord",
    "ScanPoint",
    "benchmark_scan_r",
    "scan_witness",
    "SearchConfig",
    "CoarseResult",
    "coarse_search",
    "SweepRow",
    "SweepResult",
    "finite_time_sweep",
    "walker_observable_from_descriptor",
    "default_workers",
]

BLOCK_SIZE = 4096
WORKERS_ENV = "WALKBELL_WORKERS"
CANONICAL_DIRECTIONS = (
    ("+y", (0.0, 1.0, 0.0)),
    ("-y", (0.0, -1.0, 0.0)),
    ("+x", (1.0, 0.0, 0.0)),
    ("-x", (-1.0, 0.0, 0.0)),
    ("+z", (0.0, 0.0, 1.0)),
    ("-z", (0.0, 0.0, -1.0)),
)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def sample_unit_sphere(rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform point(s) on S^2 from normalized standard normals."""
    if size is None:
        while True:
            v = rng.standard_normal(3)
            n = np.linalg.norm(v)
            if n >= 1e-6:
                return v / n
    v = rng.standard_normal((size, 3))
    n = np.linalg.norm(v, axis=1)
    for k in np.flatnonzero(n < 1e-6):
        v[k] = sample_unit_sphere(rng)
        n[k] = 1.0
    return v / n[:, None]


def _block(seed: int, block: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    r = sample_unit_sphere(rng, BLOCK_SIZE)
    a = sample_unit_sphere(rng, BLOCK_SIZE)
    ap = sample_unit_sphere(rng, BLOCK_SIZE)
    return r, a, ap


def draw_trials(seed: int, start: int, stop: int):
    """Preparation and Alice directions for trials ``start..stop-1`` of ``seed``."""
    parts = []
    for b in range(start // BLOCK_SIZE, (stop - 1) // BLOCK_SIZE + 1):
        lo = max(start, b * BLOCK_SIZE) - b * BLOCK_SIZE
        hi = min(stop, (b + 1) * BLOCK_SIZE) - b * BLOCK_SIZE
        parts.append(tuple(arr[lo:hi] for arr in _block(seed, b)))
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def x0_from_ratio(ratio: float, T: int) -> int:
    """Nearest integer site to ``ratio * T``; exact halves go toward zero."""
    v = ratio * T
    n = math.floor(abs(v))
    frac = abs(v) - n
    if frac > 0.5 and abs(frac - 0.5) > 1e-9:
        n += 1
    return int(math.copysign(n, v)) if n else 0


# --- Schmidt-aligned benchmark ---------------------------------------------


class BenchmarkNotFound(LookupError):
    def __init__(self, message: str, nearest: "BenchmarkMatch"):
        super().__init__(message)
        self.nearest = nearest


@dataclass(frozen=True)
class BenchmarkMatch:
    direction: np.ndarray
    label: str
    schmidt: SchmidtData
    deviation: float


def _schmidt_at(T: int, direction) -> SchmidtData:
    state = evolve(init_walker_state(T, *coin_state_from_direction(direction)), T)
    return schmidt_decompose(state)


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def discover_benchmark_direction(
    T: int,
    target_coeffs: tuple[float, float] = (0.843, 0.538),
    tol: float = 0.005,
    n_grid: int = 2000,
) -> BenchmarkMatch:
    """
    Find a pure coin direction whose T-step state has the target Schmidt
    coefficients.

    The six axis directions are tried first and the closest one within
    ``tol`` (largest coefficient deviation) wins, earlier candidates winning
    ties. If none qualifies, a Fibonacci grid of ``n_grid`` directions is
    searched the same way. Raises :class:`BenchmarkNotFound` carrying the
    nearest candidate otherwise.
    """
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    s0t, s1t = target_coeffs
    if s0t < 0 or s1t < 0 or abs(s0t**2 + s1t**2 - 1.0) > 2 * math.sqrt(2) * tol + 2 * tol**2:
        raise ValueError(f"target coefficients {target_coeffs} are not normalized")
    target = np.array(sorted((s0t, s1t), reverse=True))

    def best_of(candidates):
        best = None
        for label, d in candidates:
            sd = _schmidt_at(T, d)
            dev = float(np.max(np.abs(np.array(sd.coefficients) - target)))
            if best is None or dev < best.deviation:
                best = BenchmarkMatch(np.asarray(d, dtype=float), label, sd, dev)
        return best

    best = best_of(CANONICAL_DIRECTIONS)
    if best.deviation <= tol:
        return best
    grid = best_of((f"grid[{k}]", d) for k, d in enumerate(_fibonacci_sphere(n_grid)))
    if grid.deviation < best.deviation:
        best = grid
    if best.deviation <= tol:
        return best
    raise BenchmarkNotFound(
        f"no direction reproduces Schmidt coefficients {tuple(target)} within {tol}; "
        f"nearest is {best.label} with {best.schmidt.coefficients}",
        best,
    )


@dataclass(frozen=True)
class SchmidtBenchmark:
    T: int
    direction: np.ndarray
    schmidt: SchmidtData
    settings: OptimalSettings

    @property
    def coin_dirs(self) -> tuple[CoinObservable, CoinObservable]:
        return CoinObservable.from_matrix(self.settings.A0), CoinObservable.from_matrix(self.settings.A1)

    @property
    def walker_obs(self) -> tuple[EmbeddedWalkerObservable, EmbeddedWalkerObservable]:
        return self.settings.B0, self.settings.B1

    def walker_descriptors(self) -> list[dict]:
        out = []
        for B in self.walker_obs:
            d = B.descriptor()
            d["benchmark_dir"] = [float(v) for v in self.direction]
            out.append(d)
        return out

    def responses(self) -> ResponseSet:
        return ResponseSet.build(self.T, *self.walker_obs)


def build_benchmark(T: int, direction) -> SchmidtBenchmark:
    d = np.asarray(direction, dtype=float)
    sd = _schmidt_at(T, d)
    return SchmidtBenchmark(T, d, sd, optimal_chsh_settings(sd))


# --- witness records ---------------------------------------------------------


def walker_observable_from_descriptor(desc: dict, T: int):
    kind = desc["kind"]
    if kind == "sign":
        return sign_binning(T, int(desc.get("sign_of_zero", 1)))
    if kind == "threshold":
        return threshold_binning(T, int(desc["x0"]))
    if kind == "custom":
        return DiagonalBinning(T, np.asarray(desc["labels"], dtype=float))
    if kind == "schmidt_aligned":
        sd = _schmidt_at(T, desc["benchmark_dir"])
        sub = np.asarray(desc["sub_re"]) + 1j * np.asarray(desc["sub_im"])
        return embed_subspace_observable(sub, sd)
    raise ValueError(f"unknown walker observable kind {kind!r}")


@dataclass
class WitnessRecord:
    T: int
    r_norm: float
    prep_dir: tuple[float, float, float]
    coin_dirs: tuple[tuple[float, float, float], tuple[float, float, float]]
    walker_obs: list[dict]
    report: BellReport
    table: JointTable
    seed: int
    trial: int
    x0: Optional[int] = None
    tol: float = DEFAULT_TOL

    @property
    def abs_S(self) -> float:
        return abs(self.report.S)

    @property
    def prep(self) -> BlochVector:
        return BlochVector.from_direction(self.prep_dir, self.r_norm)

    def observables(self):
        A = tuple(CoinObservable(tuple(d)) for d in self.coin_dirs)
        B = tuple(walker_observable_from_descriptor(d, self.T) for d in self.walker_obs)
        return A, B

    def reevaluate(self, tol: Optional[float] = None) -> tuple[BellReport, JointTable]:
        A, B = self.observables()
        return evaluate_witness(self.prep, A, B, self.T, self.tol if tol is None else tol)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "r_norm": self.r_norm,
            "prep_dir": list(self.prep_dir),
            "coin_dirs": [list(d) for d in self.coin_dirs],
            "walker_obs": self.walker_obs,
            "report": self.report.to_dict(),
            "table": self.table.to_dict(),
            "seed": self.seed,
            "trial": self.trial,
            "x0": self.x0,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WitnessRecord":
        rep = d["report"]
        report = BellReport(
            rep["E00"], rep["E01"], rep["E10"], rep["E11"], rep["S"],
            rep["min_p"], rep["ns_deviation"], rep["admissible"], rep["no_signaling"],
        )
        return cls(
            int(d["T"]),
            float(d["r_norm"]),
            tuple(d["prep_dir"]),
            tuple(tuple(v) for v in d["coin_dirs"]),
            list(d["walker_obs"]),
            report,
            JointTable.from_dict(d["table"]),
            int(d["seed"]),
            int(d["trial"]),
            d.get("x0"),
            float(d.get("tol", DEFAULT_TOL)),
        )


def _record(T, r_norm, prep_dir, coin_dirs, walker_descs, B, seed, trial, x0, tol) -> WitnessRecord:
    """Re-evaluate a search candidate on the branch route and package it."""
    A = tuple(CoinObservable(tuple(float(v) for v in d)) for d in coin_dirs)
    prep_dir = tuple(float(v) for v in prep_dir)
    report, table = evaluate_witness(BlochVector.from_direction(prep_dir, r_norm), A, B, T, tol)
    return WitnessRecord(
        T, float(r_norm), prep_dir, tuple(a.bloch_dir for a in A), walker_descs,
        report, table, int(seed), int(trial), x0, tol,
    )


def _accept(p: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Admissibility + no-signaling masks and min entries for a batch of tables."""
    min_p = p.reshape(p.shape[0], -1).min(axis=1)
    norm_err = np.abs(p.sum(axis=(1, 2)) - 1.0).reshape(p.shape[0], -1).max(axis=1)
    alice = p.sum(axis=2)
    bob = p.sum(axis=1)
    ns = np.maximum(
        np.abs(alice[..., 0] - alice[..., 1]).reshape(p.shape[0], -1).max(axis=1),
        np.abs(bob[:, :, 0, :] - bob[:, :, 1, :]).reshape(p.shape[0], -1).max(axis=1),
    )
    ok = (min_p >= -tol) & (norm_err <= tol) & (ns <= tol)
    return ok, min_p, ns


def _chsh(p: np.ndarray) -> np.ndarray:
    E = p[:, 0, 0] + p[:, 1, 1] - p[:, 0, 1] - p[:, 1, 0]  # [n, i, j]
    return E[:, 0, 0] + E[:, 0, 1] + E[:, 1, 0] - E[:, 1, 1]


# --- benchmark scan over |r| -------------------------------------------------


@dataclass
class ScanPoint:
    r_norm: float
    best_S: float
    min_p: float
    n_accepted: int
    trial: Optional[int]
    direction: Optional[tuple[float, float, float]]


def benchmark_scan_r(
    bench: SchmidtBenchmark,
    r_grid: Sequence[float],
    n_dirs: int,
    seed: int,
    tol: float = DEFAULT_TOL,
) -> list[ScanPoint]:
    """
    Best admissible, no-signaling ``|S|`` at each ``|r|`` with the benchmark
    settings held fixed.

    Directions are the preparation directions of trials ``0..n_dirs-1`` of
    ``seed`` and are shared across the grid. Magnitudes without any accepted
    direction are reported with ``best_S = min_p = nan``.
    """
    if not len(r_grid):
        raise ValueError("r_grid is empty")
    if n_dirs < 1:
        raise ValueError("n_dirs must be positive")
    dirs, _, _ = draw_trials(seed, 0, n_dirs)
    resp = bench.responses()
    a0, a1 = (np.asarray(a.bloch_dir) for a in bench.coin_dirs)
    points = []
    for rn in r_grid:
        p = batch_probabilities(rn * dirs, a0, a1, resp)
        ok, min_p, _ = _accept(p, tol)
        absS = np.abs(_chsh(p))
        if not ok.any():
            points.append(ScanPoint(float(rn), math.nan, math.nan, 0, None, None))
            continue
        k = int(np.argmax(np.where(ok, absS, -np.inf)))
        points.append(
            ScanPoint(
                float(rn), float(absS[k]), float(min_p[k]), int(ok.sum()), k,
                tuple(float(v) for v in dirs[k]),
            )
        )
    return points


def scan_witness(
    bench: SchmidtBenchmark,
    r_norm: float,
    n_dirs: int,
    seed: int,
    tol: float = DEFAULT_TOL,
) -> Optional[WitnessRecord]:
    """The best directional-scan witness at one magnitude, re-evaluated exactly."""
    (pt,) = benchmark_scan_r(bench, [r_norm], n_dirs, seed, tol)
    if pt.trial is None:
        return None
    return _record(
        bench.T, r_norm, pt.direction, [a.bloch_dir for a in bench.coin_dirs],
        bench.walker_descriptors(), bench.walker_obs, seed, pt.trial, None, tol,
    )


# --- coarse-grained search ---------------------------------------------------


@dataclass
class SearchConfig:
    T: int = 60
    r_norm: float = 1.45
    n_trials: int = 10_000
    seeds: list[int] = field(default_factory=lambda: list(range(8)))
    x0_grid: Optional[list[int]] = None
    x0_ratios: Optional[list[float]] = None
    tol: float = DEFAULT_TOL
    sign_of_zero: int = 1

    def thresholds(self) -> list[int]:
        """Integer thresholds from explicit sites and ratios; all of 0..T if neither is given."""
        xs: list[int] = []
        if self.x0_grid is not None:
            xs.extend(int(v) for v in self.x0_grid)
        if self.x0_ratios is not None:
            xs.extend(x0_from_ratio(v, self.T) for v in self.x0_ratios)
        if self.x0_grid is None and self.x0_ratios is None:
            xs = list(range(self.T + 1))
        out = sorted(set(xs))
        if not out:
            raise ValueError("threshold grid is empty")
        return out

    def validate(self):
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        for x0 in self.thresholds():
            if not 0 <= x0 <= self.T + 1:
                raise ValueError(f"threshold {x0} outside [0, {self.T + 1}]")


@dataclass
class CellStats:
    """Per (seed, x0) search outcome."""

    seed: int
    x0: int
    n_trials: int
    n_accepted: int
    n_gt2: int
    best_S: float
    min_p: float
    trial: Optional[int]


@dataclass
class CoarseResult:
    config: SearchConfig
    best: Optional[WitnessRecord]
    cells: list[CellStats]

    @property
    def n_accepted(self) -> int:
        return sum(c.n_accepted for c in self.cells)

    @property
    def n_gt2(self) -> int:
        return sum(c.n_gt2 for c in self.cells)

    def per_seed_best(self) -> dict[int, CellStats]:
        out: dict[int, CellStats] = {}
        for c in self.cells:
            if c.trial is None:
                continue
            cur = out.get(c.seed)
            if cur is None or (-c.best_S, c.trial, c.x0) < (-cur.best_S, cur.trial, cur.x0):
                out[c.seed] = c
        return out


def _coarse_seed(cfg: SearchConfig, seed: int) -> list[CellStats]:
    T = cfg.T
    b0 = sign_binning(T, cfg.sign_of_zero)
    thresholds = cfg.thresholds()
    resps = {x0: ResponseSet.build(T, b0, threshold_binning(T, x0)) for x0 in thresholds}
    cells = {x0: CellStats(seed, x0, cfg.n_trials, 0, 0, -math.inf, math.nan, None) for x0 in thresholds}
    for start in range(0, cfg.n_trials, BLOCK_SIZE):
        stop = min(cfg.n_trials, start + BLOCK_SIZE)
        r, a, ap = draw_trials(seed, start, stop)
        for x0 in thresholds:
            p = batch_probabilities(cfg.r_norm * r, a, ap, resps[x0])
            ok, min_p, _ = _accept(p, cfg.tol)
            absS = np.abs(_chsh(p))
            c = cells[x0]
            c.n_accepted += int(ok.sum())
            c.n_gt2 += int((ok & (absS > 2.0)).sum())
            if ok.any():
                k = int(np.argmax(np.where(ok, absS, -np.inf)))
                if absS[k] > c.best_S:
                    c.best_S, c.min_p, c.trial = float(absS[k]), float(min_p[k]), start + k
    out = []
    for x0 in thresholds:
        c = cells[x0]
        if c.trial is None:
            c.best_S = math.nan
        out.append(c)
    return out


def _coarse_task(args):
    cfg, seed = args
    return _coarse_seed(cfg, seed)


def coarse_search(cfg: SearchConfig, workers: Optional[int] = None) -> CoarseResult:
    """
    Randomized multi-start search with Bob restricted to sign and threshold
    binnings.

    Every trial samples a preparation direction and two Alice directions;
    candidates that fail admissibility or no-signaling at ``cfg.tol`` are
    dropped. The global best is the largest ``|S|``, ties broken by
    ``(seed, trial, x0)``; it is re-evaluated on the branch route before
    being returned. ``best`` is ``None`` when nothing was accepted.
    """
    cfg.validate()
    workers = default_workers() if workers is None else max(1, workers)
    tasks = [(cfg, s) for s in cfg.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
            per_seed = list(ex.map(_coarse_task, tasks))
    else:
        per_seed = [_coarse_task(t) for t in tasks]
    cells = [c for group in per_seed for c in group]
    cands = [c for c in cells if c.trial is not None]
    best = None
    if cands:
        top = min(cands, key=lambda c: (-c.best_S, c.seed, c.trial, c.x0))
        r, a, ap = draw_trials(top.seed, top.trial, top.trial + 1)
        T = cfg.T
        B = (sign_binning(T, cfg.sign_of_zero), threshold_binning(T, top.x0))
        best = _record(
            T, cfg.r_norm, r[0], (a[0], ap[0]), [b.descriptor() for b in B], B,
            top.seed, top.trial, top.x0, cfg.tol,
        )
    return CoarseResult(cfg, best, cells)


# --- finite-time sweep -------------------------------------------------------


@dataclass
class SweepRow:
    T: int
    best_S: float
    median_S: float
    per_seed: dict[int, tuple[float, int, float]]
    n_accepted: int
    n_gt2: int
    median_min_p: float
    best: Optional[WitnessRecord]

    @property
    def fraction_gt2(self) -> float:
        return self.n_gt2 / self.n_accepted if self.n_accepted else math.nan


@dataclass
class SweepResult:
    r_norm: float
    rows: list[SweepRow]

    def row(self, T: int) -> SweepRow:
        for r in self.rows:
            if r.T == T:
                return r
        raise KeyError(T)


def finite_time_sweep(
    T_list: Sequence[int],
    r_norm: float,
    base: SearchConfig,
    workers: Optional[int] = None,
) -> SweepResult:
    """
    Coarse search repeated over walk times.

    ``base`` supplies seeds, trial budget, tolerance and threshold ratios;
    its ``T`` and ``r_norm`` are overridden. With no explicit thresholds the
    grid is every integer site in ``0..T``.
    """
    if not len(T_list):
        raise ValueError("T_list is empty")
    rows = []
    for T in T_list:
        cfg = SearchConfig(
            T=T, r_norm=r_norm, n_trials=base.n_trials, seeds=list(base.seeds),
            x0_grid=base.x0_grid, x0_ratios=base.x0_ratios, tol=base.tol,
            sign_of_zero=base.sign_of_zero,
        )
        res = coarse_search(cfg, workers)
        seed_best = res.per_seed_best()
        per_seed = {s: (c.best_S, c.x0, c.min_p) for s, c in sorted(seed_best.items())}
        values = [v[0] for v in per_seed.values()]
        rows.append(
            SweepRow(
                T,
                max(values) if values else math.nan,
                statistics.median(values) if values else math.nan,
                per_seed,
                res.n_accepted,
                res.n_gt2,
                statistics.median(v[2] for v in per_seed.values()) if values else math.nan,
                res.best,
            )
        )
    return SweepResult(float(r_norm), rows)
