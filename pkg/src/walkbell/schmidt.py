"""
Schmidt structure of walk states and Schmidt-aligned CHSH settings.

The coin is two-dimensional, so the coin-position state has Schmidt rank at
most two and the decomposition reduces to diagonalizing the 2x2 reduced coin
operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .walk import LatticeState

__all__ = [
    "PAULI",
    "SchmidtData",
    "EmbeddedWalkerObservable",
    "NotEntangledError",
    "schmidt_decompose",
    "horodecki_max",
    "embed_subspace_observable",
    "OptimalSettings",
    "optimal_chsh_settings",
]

PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class NotEntangledError(ValueError):
    pass


def _fix_phase(v: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > atol)
    if nz.size == 0:
        return v
    return v * np.exp(-1j * np.angle(v[nz[0]]))


@dataclass(frozen=True)
class SchmidtData:
    """
    ``psi = s0 u0 (x) b0 + s1 u1 (x) b1`` with ``s0 >= s1 >= 0``.

    ``coin_vecs`` and ``walker_vecs`` hold the Schmidt vectors as columns.
    """

    s0: float
    s1: float
    coin_vecs: np.ndarray
    walker_vecs: np.ndarray
    degenerate: bool = False

    @property
    def coefficients(self) -> tuple[float, float]:
        return (self.s0, self.s1)

    @property
    def concurrence(self) -> float:
        return 2.0 * self.s0 * self.s1

    def reconstruct(self) -> np.ndarray:
        """Amplitude array ``(2T+1, 2)`` rebuilt from the Schmidt form."""
        s = np.array([self.s0, self.s1])
        return (self.walker_vecs * s) @ self.coin_vecs.T

    def to_dict(self) -> dict:
        def cplx(a):
            return [[float(v.real), float(v.imag)] for v in np.ravel(a)]

        return {
            "s0": self.s0,
            "s1": self.s1,
            "degenerate": self.degenerate,
            "u0": cplx(self.coin_vecs[:, 0]),
            "u1": cplx(self.coin_vecs[:, 1]),
            "b0": cplx(self.walker_vecs[:, 0]),
            "b1": cplx(self.walker_vecs[:, 1]),
        }


def schmidt_decompose(state: LatticeState) -> SchmidtData:
    """Rank-2 Schmidt decomposition from the reduced coin operator."""
    M = np.asarray(state.amplitudes)
    norm2 = float(np.sum(np.abs(M) ** 2))
    if abs(norm2 - 1.0) > 1e-10:
        raise ValueError(f"state is not normalized (norm^2 = {norm2!r})")
    rho_c = M.T @ M.conj()
    lam, vecs = np.linalg.eigh(rho_c)
    lam = np.clip(lam, 0.0, None)
    cols = [_fix_phase(vecs[:, k]) for k in range(2)]
    order = [1, 0]
    if abs(lam[1] - lam[0]) <= 1e-12:
        # tie: lexicographic order on (re, im) of the phase-fixed components
        keys = [tuple(x for c in col for x in (c.real, c.imag)) for col in cols]
        order = sorted((0, 1), key=lambda k: keys[k], reverse=True)
    U = np.stack([cols[k] for k in order], axis=1)
    s = np.sqrt(lam[order])
    B = np.zeros((M.shape[0], 2), dtype=complex)
    B[:, 0] = M @ U[:, 0].conj() / s[0]
    degenerate = bool(s[1] < 1e-12)
    if not degenerate:
        B[:, 1] = M @ U[:, 1].conj() / s[1]
    else:
        B[:, 1] = _orthogonal_in_window(B[:, 0], state)
        s[1] = 0.0
    return SchmidtData(float(s[0]), float(s[1]), U, B, degenerate)


def _orthogonal_in_window(b0: np.ndarray, state: LatticeState) -> np.ndarray:
    steps = state.steps_taken
    lo, hi = state.t_max - steps, state.t_max + steps + 1
    for k in list(range(lo, hi)) + list(range(b0.size)):
        e = np.zeros_like(b0)
        e[k] = 1.0
        v = e - b0 * np.vdot(b0, e)
        n = np.linalg.norm(v)
        if n > 1e-6:
            return _fix_phase(v / n)
    raise ValueError("window too small for a second walker Schmidt vector")


def horodecki_max(s0: float, s1: float) -> float:
    """Largest CHSH value of the pure state with Schmidt coefficients (s0, s1)."""
    if abs(s0 * s0 + s1 * s1 - 1.0) > 1e-10:
        raise ValueError(f"Schmidt coefficients are not normalized: {s0}, {s1}")
    if s1 < 0 or s0 < s1 - 1e-12:
        raise ValueError(f"expected s0 >= s1 >= 0, got {s0}, {s1}")
    return 2.0 * math.sqrt(1.0 + 4.0 * s0 * s0 * s1 * s1)


@dataclass(frozen=True)
class EmbeddedWalkerObservable:
    """
    Dichotomic walker observable acting as ``subspace_matrix`` on
    span{b0, b1} and as +1 on the orthogonal complement.
    """

    subspace_matrix: np.ndarray
    basis: np.ndarray

    def apply(self, M: np.ndarray) -> np.ndarray:
        """``(B (x) I) M`` for an amplitude array ``M`` of shape (2T+1, 2)."""
        V = self.basis
        K = V.conj().T @ M
        return M + V @ ((self.subspace_matrix - np.eye(2)) @ K)

    def dense(self) -> np.ndarray:
        V = self.basis
        n = V.shape[0]
        return V @ self.subspace_matrix @ V.conj().T + np.eye(n) - V @ V.conj().T

    def descriptor(self) -> dict:
        return {
            "kind": "schmidt_aligned",
            "sub_re": np.real(self.subspace_matrix).tolist(),
            "sub_im": np.imag(self.subspace_matrix).tolist(),
        }


def embed_subspace_observable(sub, sd: SchmidtData) -> EmbeddedWalkerObservable:
    sub = np.asarray(sub, dtype=complex)
    if sub.shape != (2, 2):
        raise ValueError("subspace observable must be 2x2")
    if np.max(np.abs(sub - sub.conj().T)) > 1e-10:
        raise ValueError("subspace observable must be Hermitian")
    if np.max(np.abs(sub @ sub - np.eye(2))) > 1e-10:
        raise ValueError("subspace observable must square to the identity")
    return EmbeddedWalkerObservable(sub, sd.walker_vecs)


def _pure_chsh(M, A0, A1, B0, B1) -> float:
    S = 0.0
    for sign, A, B in ((1, A0, B0), (1, A0, B1), (1, A1, B0), (-1, A1, B1)):
        G = M.conj().T @ B.apply(M)
        S += sign * float(np.sum(G * A).real)
    return S


def _bloch_of(A: np.ndarray) -> np.ndarray:
    return np.array([np.trace(A @ P).real / 2.0 for P in PAULI[1:]])


@dataclass(frozen=True)
class OptimalSettings:
    A0: np.ndarray
    A1: np.ndarray
    B0: EmbeddedWalkerObservable
    B1: EmbeddedWalkerObservable
    angle: float
    achieved_S: float
    target_S: float
    refined: bool

    @property
    def alice_dirs(self) -> tuple[np.ndarray, np.ndarray]:
        return _bloch_of(self.A0), _bloch_of(self.A1)


def optimal_chsh_settings(sd: SchmidtData, tol: float = 1e-9) -> OptimalSettings:
    """
    Canonical Horodecki-optimal settings in the Schmidt bases.

    Alice measures ``sigma_z`` and ``sigma_x`` of the coin Schmidt basis, Bob
    ``cos(mu) sigma_z +- sin(mu) sigma_x`` of the walker Schmidt basis with
    ``tan(mu) = 2 s0 s1``. The CHSH value on the decomposed state is checked
    against :func:`horodecki_max`; if it misses by more than ``tol`` the two
    Bob angles are refined by Nelder-Mead.
    """
    if sd.degenerate or sd.s1 <= 1e-9:
        raise NotEntangledError("product state: no CHSH violation to optimize")
    _, sx, _, sz = PAULI
    U = sd.coin_vecs
    A0 = U @ sz @ U.conj().T
    A1 = U @ sx @ U.conj().T
    mu = math.atan(sd.concurrence)
    target = horodecki_max(sd.s0, sd.s1)
    M = sd.reconstruct()

    def bobs(t0, t1):
        return (
            embed_subspace_observable(math.cos(t0) * sz + math.sin(t0) * sx, sd),
            embed_subspace_observable(math.cos(t1) * sz + math.sin(t1) * sx, sd),
        )

    B0, B1 = bobs(mu, -mu)
    S = _pure_chsh(M, A0, A1, B0, B1)
    refined = False
    if abs(S - target) > tol:
        res = minimize(
            lambda t: -_pure_chsh(M, A0, A1, *bobs(*t)),
            x0=[mu, -mu],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
        )
        B0, B1 = bobs(*res.x)
        S = _pure_chsh(M, A0, A1, B0, B1)
        refined = True
    return OptimalSettings(A0, A1, B0, B1, mu, S, target, refined)
