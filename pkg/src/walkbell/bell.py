"""
Correlators, joint tables and CHSH reports for the coin-position Bell test.

Alice measures the coin with ``a.sigma``; Bob measures the walker with a
dichotomic observable that is either diagonal in position (a +-1 binning) or
a Schmidt-aligned embedded observable. Operators are ordered walker (x) coin.

Two evaluation routes are provided. The branch route evolves each member of
the signed ensemble through the walk and contracts amplitudes directly. The
response route uses the fact that every statistic is affine in the Bloch
vector: a 4x4 real matrix per walker observable, built from two walks, gives
``<B (x) sigma_l>`` for any preparation, which makes large randomized searches
cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, Union

import numpy as np

from .preparations import BlochVector, SignedEnsemble, signed_decomposition
from .schmidt import PAULI, EmbeddedWalkerObservable
from .tables import DEFAULT_TOL, BellReport, JointTable, bell_report
from .walk import LatticeState, evolve, init_walker_state

__all__ = [
    "CoinObservable",
    "DiagonalBinning",
    "WalkerObservable",
    "sign_binning",
    "threshold_binning",
    "evolve_ensemble",
    "correlator",
    "marginal_coin",
    "marginal_walker",
    "joint_table",
    "evaluate_witness",
    "pauli_response",
    "ResponseSet",
    "batch_probabilities",
]

Branches = Sequence[tuple[float, LatticeState]]


@dataclass(frozen=True)
class CoinObservable:
    bloch_dir: tuple[float, float, float]

    def __post_init__(self):
        d = np.asarray(self.bloch_dir, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-10:
            raise ValueError(f"coin observable needs a unit Bloch direction, got {self.bloch_dir}")
        object.__setattr__(self, "bloch_dir", tuple(float(v) for v in d))

    @classmethod
    def from_matrix(cls, A: np.ndarray) -> "CoinObservable":
        A = np.asarray(A, dtype=complex)
        if abs(np.trace(A)) > 1e-10:
            raise ValueError("coin observable must be traceless")
        return cls(tuple(float(np.trace(A @ P).real / 2.0) for P in PAULI[1:]))

    @property
    def matrix(self) -> np.ndarray:
        x, y, z = self.bloch_dir
        return x * PAULI[1] + y * PAULI[2] + z * PAULI[3]

    @property
    def pauli_vector(self) -> np.ndarray:
        return np.array([0.0, *self.bloch_dir])

    def negated(self) -> "CoinObservable":
        return CoinObservable(tuple(-v for v in self.bloch_dir))


class WalkerObservable(Protocol):
    def apply(self, M: np.ndarray) -> np.ndarray: ...

    def descriptor(self) -> dict: ...


@dataclass(frozen=True)
class DiagonalBinning:
    """``B = sum_x label(x) |x><x|`` over the window ``x = -T..T``."""

    T: int
    labels: np.ndarray
    kind: str = "custom"
    param: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=float)
        if labels.shape != (2 * self.T + 1,):
            raise ValueError(f"need {2 * self.T + 1} labels, got {labels.shape}")
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError("binning labels must be +1 or -1")
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    def label(self, x: int) -> int:
        return int(self.labels[x + self.T])

    def apply(self, M: np.ndarray) -> np.ndarray:
        return self.labels[:, None] * M

    def descriptor(self) -> dict:
        if self.kind == "sign":
            return {"kind": "sign", "sign_of_zero": self.param}
        if self.kind == "threshold":
            return {"kind": "threshold", "x0": self.param}
        return {"kind": "custom", "labels": [int(v) for v in self.labels]}


AnyWalkerObservable = Union[DiagonalBinning, EmbeddedWalkerObservable]


def sign_binning(T: int, sign_of_zero: int = 1) -> DiagonalBinning:
    if sign_of_zero not in (1, -1):
        raise ValueError(f"sign_of_zero must be +1 or -1, got {sign_of_zero}")
    x = np.arange(-T, T + 1)
    labels = np.where(x > 0, 1.0, np.where(x < 0, -1.0, float(sign_of_zero)))
    return DiagonalBinning(T, labels, "sign", sign_of_zero)


def threshold_binning(T: int, x0: int) -> DiagonalBinning:
    """+1 on ``|x| >= x0``, -1 inside."""
    if not 0 <= x0 <= T + 1:
        raise ValueError(f"threshold x0 must lie in [0, {T + 1}], got {x0}")
    x = np.arange(-T, T + 1)
    return DiagonalBinning(T, np.where(np.abs(x) >= x0, 1.0, -1.0), "threshold", int(x0))


def evolve_ensemble(ensemble: SignedEnsemble, T: int) -> list[tuple[float, LatticeState]]:
    return [
        (m.weight, evolve(init_walker_state(T, m.amp0, m.amp1), T)) for m in ensemble.members
    ]


def _check_branches(branches: Branches, n_sites: int | None = None):
    if not branches:
        raise ValueError("empty ensemble")
    T = branches[0][1].t_max
    steps = branches[0][1].steps_taken
    for _, st in branches:
        if st.t_max != T or st.steps_taken != steps:
            raise ValueError("all branch states must share the same lattice and time")
    if n_sites is not None and n_sites != 2 * T + 1:
        raise ValueError(f"walker observable has {n_sites} sites, lattice has {2 * T + 1}")


def _n_sites(B) -> int:
    if isinstance(B, DiagonalBinning):
        return B.labels.size
    return B.basis.shape[0]


def _coin_gram(M: np.ndarray, B) -> np.ndarray:
    """``G[c, c'] = sum_x conj(M[x, c]) (B M)[x, c']``."""
    BM = M if B is None else B.apply(M)
    return M.conj().T @ BM


def correlator(branches: Branches, B, A: CoinObservable) -> float:
    """``sum_k w_k <psi_k| B (x) A |psi_k>``."""
    _check_branches(branches, _n_sites(B))
    Am = A.matrix
    val = 0.0 + 0.0j
    for w, st in branches:
        val += w * np.sum(_coin_gram(np.asarray(st.amplitudes), B) * Am)
    return float(val.real)


def marginal_coin(branches: Branches, A: CoinObservable) -> float:
    _check_branches(branches)
    Am = A.matrix
    return float(sum(w * np.sum(_coin_gram(np.asarray(st.amplitudes), None) * Am) for w, st in branches).real)


def marginal_walker(branches: Branches, B) -> float:
    _check_branches(branches, _n_sites(B))
    return float(sum(w * np.trace(_coin_gram(np.asarray(st.amplitudes), B)) for w, st in branches).real)


def joint_table(
    branches: Branches,
    A0: CoinObservable,
    A1: CoinObservable,
    B0,
    B1,
    tol: float = DEFAULT_TOL,
) -> JointTable:
    """
    ``p(a, b | i, j) = sum_k w_k <psi_k| Pi_b^(j) (x) Pi_a^(i) |psi_k>``.

    Projectors are ``Pi = (I + outcome * observable) / 2`` on each side.
    """
    _check_branches(branches, _n_sites(B0))
    _check_branches(branches, _n_sites(B1))
    eye = np.eye(2)
    alice = [[(eye + a * A.matrix) / 2.0 for a in (1, -1)] for A in (A0, A1)]
    p = np.zeros((2, 2, 2, 2))
    for w, st in branches:
        M = np.asarray(st.amplitudes)
        for j, B in enumerate((B0, B1)):
            BM = B.apply(M)
            for bi, b in enumerate((1, -1)):
                G = M.conj().T @ ((M + b * BM) / 2.0)
                for i in (0, 1):
                    for ai in (0, 1):
                        p[ai, bi, i, j] += w * float(np.sum(G * alice[i][ai]).real)
    return JointTable(p, tol)


def evaluate_witness(
    prep: BlochVector,
    coin_dirs,
    walker_obs,
    T: int,
    tol: float = DEFAULT_TOL,
) -> tuple[BellReport, JointTable]:
    """Signed ensemble for ``prep``, evolved ``T`` steps, tested with the given settings."""
    A0, A1 = (a if isinstance(a, CoinObservable) else CoinObservable(tuple(a)) for a in coin_dirs)
    B0, B1 = walker_obs
    branches = evolve_ensemble(signed_decomposition(prep), T)
    table = joint_table(branches, A0, A1, B0, B1, tol)
    return bell_report(table), table


# --- response route -------------------------------------------------------


def _basis_walks(T: int) -> tuple[np.ndarray, np.ndarray]:
    return tuple(
        np.asarray(evolve(init_walker_state(T, *amps), T).amplitudes)
        for amps in ((1.0, 0.0), (0.0, 1.0))
    )


def pauli_response(T: int, B=None, basis_walks=None) -> np.ndarray:
    """
    Real 4x4 matrix ``K[k, l] = Tr[(B (x) sigma_l) U^T (|0><0| (x) sigma_k / 2) U^T+]``.

    For a preparation with Bloch vector ``r`` and ``rt = (1, r)`` the
    expectation of ``B (x) sigma_l`` after ``T`` steps is ``rt @ K[:, l]``.
    ``B=None`` stands for the identity on the walker.
    """
    psi = basis_walks if basis_walks is not None else _basis_walks(T)
    if B is not None and _n_sites(B) != psi[0].shape[0]:
        raise ValueError("walker observable does not match the lattice")
    # G[c', c] = <psi_c'| B (x) . |psi_c> as a coin 2x2 block
    G = [[psi[cp].conj().T @ (psi[c] if B is None else B.apply(psi[c])) for c in (0, 1)] for cp in (0, 1)]
    K = np.zeros((4, 4))
    for k in range(4):
        for l in range(4):
            val = 0.0 + 0.0j
            for c in (0, 1):
                for cp in (0, 1):
                    coef = PAULI[k][c, cp] / 2.0
                    if coef != 0:
                        val += coef * np.sum(G[cp][c] * PAULI[l])
            K[k, l] = val.real
    return K


@dataclass(frozen=True)
class ResponseSet:
    """Response matrices for the identity and Bob's two observables."""

    K_id: np.ndarray
    K_b0: np.ndarray
    K_b1: np.ndarray

    @classmethod
    def build(cls, T: int, B0, B1) -> "ResponseSet":
        psi = _basis_walks(T)
        return cls(pauli_response(T, None, psi), pauli_response(T, B0, psi), pauli_response(T, B1, psi))


def batch_probabilities(
    prep_bloch: np.ndarray,
    alice0: np.ndarray,
    alice1: np.ndarray,
    resp: ResponseSet,
) -> np.ndarray:
    """
    Joint tables for many configurations at once.

    ``prep_bloch`` has shape ``(n, 3)`` (Bloch vectors, any norm), the Alice
    directions are ``(n, 3)`` or ``(3,)``. Returns ``p`` with shape
    ``(n, 2, 2, 2, 2)`` indexed like :class:`JointTable`.
    """
    prep_bloch = np.atleast_2d(prep_bloch)
    n = prep_bloch.shape[0]
    rt = np.concatenate([np.ones((n, 1)), prep_bloch], axis=1)
    alice = [np.broadcast_to(np.atleast_2d(a), (n, 3)) for a in (alice0, alice1)]
    P_id = rt @ resp.K_id
    P_b = (rt @ resp.K_b0, rt @ resp.K_b1)
    trace = P_id[:, 0]
    p = np.empty((n, 2, 2, 2, 2))
    for i in (0, 1):
        mA = np.einsum("nl,nl->n", P_id[:, 1:], alice[i])
        for j in (0, 1):
            mB = P_b[j][:, 0]
            E = np.einsum("nl,nl->n", P_b[j][:, 1:], alice[i])
            for ai, a in enumerate((1.0, -1.0)):
                for bi, b in enumerate((1.0, -1.0)):
                    p[:, ai, bi, i, j] = 0.25 * (trace + a * mA + b * mB + a * b * E)
    return p
