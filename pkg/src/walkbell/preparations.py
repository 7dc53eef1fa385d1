"""
Bloch-parametrized coin preparations, including nonpositive ones.

A coin operator ``(I + r.sigma)/2`` with ``|r| > 1`` is never built as a
matrix. It is carried as the two-member signed ensemble over the antipodal
pure states ``+r_hat`` and ``-r_hat`` with weights ``(1 +- |r|)/2``, and every
downstream statistic is the signed combination of the two physical branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .tables import JointTable

__all__ = [
    "BlochVector",
    "EnsembleMember",
    "SignedEnsemble",
    "coin_state_from_direction",
    "signed_decomposition",
    "negativity_cost",
    "sampling_overhead",
    "allocate_shots",
    "emulate_shots",
    "EmulationResult",
    "shot_noise_scan",
]


@dataclass(frozen=True)
class BlochVector:
    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.rx, self.ry, self.rz)):
            raise ValueError(f"Bloch components must be finite, got {self.as_array()}")

    @classmethod
    def from_direction(cls, direction, norm: float) -> "BlochVector":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(*(float(v) for v in norm * d))

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz], dtype=float)

    @property
    def norm(self) -> float:
        return math.hypot(self.rx, self.ry, self.rz)

    @property
    def physical(self) -> bool:
        return self.norm <= 1.0

    @property
    def extended(self) -> bool:
        return self.norm > 1.0


class EnsembleMember(NamedTuple):
    weight: float
    amp0: complex
    amp1: complex


@dataclass(frozen=True)
class SignedEnsemble:
    members: tuple[EnsembleMember, ...]

    def __post_init__(self):
        total = sum(m.weight for m in self.members)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights must sum to 1, got {total!r}")
        for m in self.members:
            n2 = abs(m.amp0) ** 2 + abs(m.amp1) ** 2
            if abs(n2 - 1.0) > 1e-12:
                raise ValueError(f"member amplitudes are not unit-normalized ({n2!r})")

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(m.weight for m in self.members)

    def to_records(self) -> list[dict]:
        return [
            {
                "weight": m.weight,
                "amp0_re": float(np.real(m.amp0)),
                "amp0_im": float(np.imag(m.amp0)),
                "amp1_re": float(np.real(m.amp1)),
                "amp1_im": float(np.imag(m.amp1)),
            }
            for m in self.members
        ]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "SignedEnsemble":
        return cls(
            tuple(
                EnsembleMember(
                    r["weight"],
                    complex(r["amp0_re"], r["amp0_im"]),
                    complex(r["amp1_re"], r["amp1_im"]),
                )
                for r in records
            )
        )


def coin_state_from_direction(unit_dir) -> tuple[complex, complex]:
    """
    Pure coin state with Bloch vector ``unit_dir``.

    The global phase is chosen so that the first nonzero amplitude is real
    and positive.
    """
    d = np.asarray(unit_dir, dtype=float)
    n = math.hypot(*d)
    if not math.isfinite(n) or abs(n - 1.0) > 1e-10:
        raise ValueError(f"direction must be a unit vector, got norm {n!r}")
    x, y, z = d / n
    if x == 0.0 and y == 0.0:
        return (1 + 0j, 0j) if z > 0 else (0j, 1 + 0j)
    # half-angle from atan2 keeps precision near the poles
    half = math.atan2(math.hypot(x, y), z) / 2.0
    alpha = math.cos(half)
    beta_abs = math.sin(half)
    phi = math.atan2(y, x)
    return complex(alpha), beta_abs * complex(math.cos(phi), math.sin(phi))


def signed_decomposition(r: BlochVector) -> SignedEnsemble:
    """Two-member ensemble ``w+ |+r_hat> + w- |-r_hat>`` with ``w+- = (1 +- |r|)/2``."""
    norm = r.norm
    if norm == 0.0:
        up = coin_state_from_direction((0.0, 0.0, 1.0))
        down = coin_state_from_direction((0.0, 0.0, -1.0))
        return SignedEnsemble((EnsembleMember(0.5, *up), EnsembleMember(0.5, *down)))
    rhat = r.as_array() / norm
    w_plus = (1.0 + norm) / 2.0
    w_minus = 1.0 - w_plus
    return SignedEnsemble(
        (
            EnsembleMember(w_plus, *coin_state_from_direction(rhat)),
            EnsembleMember(w_minus, *coin_state_from_direction(-rhat)),
        )
    )


def negativity_cost(r: BlochVector) -> float:
    """l1 norm of the decomposition weights, i.e. ``max(|r|, 1)``."""
    return max(r.norm, 1.0)


def sampling_overhead(r: BlochVector, n_shots: int) -> float:
    if n_shots < 1:
        raise ValueError(f"n_shots must be at least 1, got {n_shots}")
    return negativity_cost(r) ** 2 / n_shots


def allocate_shots(weights: Sequence[float], n_total: int) -> tuple[int, ...]:
    """
    Split a shot budget across branches in proportion to ``|w_k|``.

    Rounding remainders go to the branches with the largest fractional
    parts, earliest first.
    """
    if n_total < 1:
        raise ValueError(f"n_total must be at least 1, got {n_total}")
    a = np.abs(np.asarray(weights, dtype=float))
    share = a / a.sum() * n_total
    base = np.floor(share).astype(int)
    rest = n_total - int(base.sum())
    order = sorted(range(len(a)), key=lambda k: (-(share[k] - base[k]), k))
    for k in order[:rest]:
        base[k] += 1
    return tuple(int(v) for v in base)


def _branch_probs(table: JointTable, i: int, j: int) -> np.ndarray:
    p = table.p[:, :, i, j].ravel().copy()
    if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-10:
        raise ValueError("branch table is not a physical distribution")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _sample_frequencies(rng, table: JointTable, n: int, size=None) -> np.ndarray:
    """Empirical frequencies, shape ``size + (2, 2, 2, 2)``."""
    shape = () if size is None else (size,)
    out = np.zeros(shape + (2, 2, 2, 2))
    for i in (0, 1):
        for j in (0, 1):
            counts = rng.multinomial(n, _branch_probs(table, i, j), size=size)
            out[..., i, j] = counts.reshape(shape + (2, 2)) / n
    return out


class EmulationResult(NamedTuple):
    table: JointTable
    stderr: np.ndarray
    S: float
    S_stderr: float


def _normalize_shots(n_shots, n_branches: int) -> tuple[int, ...]:
    if np.isscalar(n_shots):
        shots = (int(n_shots),) * n_branches
    else:
        shots = tuple(int(v) for v in n_shots)
    if len(shots) != n_branches:
        raise ValueError("need one shot count per branch")
    if any(s < 0 for s in shots) or sum(shots) == 0:
        raise ValueError(f"shot counts must be positive, got {shots}")
    return shots


def emulate_shots(
    exact_tables_plus: JointTable,
    exact_tables_minus: JointTable,
    weights: tuple[float, float],
    n_shots_per_branch,
    rng_seed: int,
) -> EmulationResult:
    """
    Finite-shot emulation of a signed two-branch preparation.

    Each branch is a physical experiment: for every setting pair we draw
    multinomial counts over the four outcomes and combine the two empirical
    tables with the signed weights.

    Parameters
    ----------
    exact_tables_plus, exact_tables_minus
        Exact tables of the ``+r_hat`` and ``-r_hat`` branches.
    weights
        ``(w_plus, w_minus)``, summing to one.
    n_shots_per_branch
        Shots per setting pair, either one count for both branches or a pair.
        A branch with zero weight may be given zero shots.
    rng_seed
        Seed for ``numpy.random.default_rng``.

    Returns
    -------
    EmulationResult
        Reconstructed table, per-entry standard errors, and the CHSH estimate
        with its standard error.
    """
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {weights}")
    shots = _normalize_shots(n_shots_per_branch, 2)
    rng = np.random.default_rng(rng_seed)
    p = np.zeros((2, 2, 2, 2))
    var = np.zeros((2, 2, 2, 2))
    var_S = 0.0
    for w, table, n in zip(weights, (exact_tables_plus, exact_tables_minus), shots):
        if n == 0:
            if w != 0.0:
                raise ValueError("a branch with nonzero weight needs shots")
            continue
        freq = _sample_frequencies(rng, table, n)
        p += w * freq
        var += w**2 * freq * (1.0 - freq) / n
        E = JointTable(freq).correlators()
        var_S += w**2 * float(np.sum(1.0 - E**2)) / n
    table = JointTable(p, exact_tables_plus.tol)
    return EmulationResult(table, np.sqrt(var), table.chsh(), math.sqrt(var_S))


def shot_noise_scan(
    table_plus: JointTable,
    table_minus: JointTable,
    weights: tuple[float, float],
    shot_budgets: Sequence[int],
    n_repeats: int,
    seed: int,
) -> list[dict]:
    """
    Empirical variance of the reconstructed CHSH estimator versus shots.

    For every total budget ``N`` (per setting pair) the shots are split
    across branches with :func:`allocate_shots`, the emulation is repeated
    ``n_repeats`` times, and the sample variance of ``S`` is reported next
    to the nominal ``N_cost^2 / N``.
    """
    if n_repeats < 2:
        raise ValueError("need at least two repeats for a variance")
    cost = float(sum(abs(w) for w in weights))
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    chsh_sign = np.array([[1.0, 1.0], [1.0, -1.0]])
    rows = []
    for idx, N in enumerate(shot_budgets):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))
        shots = allocate_shots(weights, N)
        S = np.zeros(n_repeats)
        for w, table, n in zip(weights, (table_plus, table_minus), shots):
            if n == 0:
                continue
            freq = _sample_frequencies(rng, table, n, size=n_repeats)
            E = np.einsum("ab,rabij->rij", sign, freq)
            S += w * np.einsum("ij,rij->r", chsh_sign, E)
        rows.append(
            {
                "n_shots": int(N),
                "shots_plus": shots[0],
                "shots_minus": shots[1],
                "mean_S": float(S.mean()),
                "var_S": float(S.var(ddof=1)),
                "nominal_var": cost**2 / N,
            }
        )
    return rows

