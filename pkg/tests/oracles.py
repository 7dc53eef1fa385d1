"""
Independent reference implementations used by the tests.

Everything here works with dense matrices on the full walker (x) coin space
and shares no code with the package beyond plain numpy.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def dense_walk_operator(T: int) -> np.ndarray:
    """``U = S (I (x) H)`` on sites ``-T..T``, basis index ``(x + T) * 2 + c``."""
    n = 2 * T + 1
    S = np.zeros((2 * n, 2 * n), dtype=complex)
    for k in range(n):
        if k - 1 >= 0:
            S[(k - 1) * 2 + 0, k * 2 + 0] = 1.0
        if k + 1 < n:
            S[(k + 1) * 2 + 1, k * 2 + 1] = 1.0
    return S @ np.kron(np.eye(n), H)


def dense_state(T: int, a0: complex, a1: complex) -> np.ndarray:
    v = np.zeros(2 * (2 * T + 1), dtype=complex)
    v[2 * T] = a0
    v[2 * T + 1] = a1
    return np.linalg.matrix_power(dense_walk_operator(T), T) @ v


def bloch_state(direction) -> tuple[complex, complex]:
    """Pure coin state as the +1 eigenvector of ``n.sigma``."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    w, v = np.linalg.eigh(n[0] * SX + n[1] * SY + n[2] * SZ)
    vec = v[:, np.argmax(w)]
    return complex(vec[0]), complex(vec[1])


def pauli_dot(n) -> np.ndarray:
    return n[0] * SX + n[1] * SY + n[2] * SZ


def dense_rho(T: int, r) -> np.ndarray:
    """``U^T (|0><0| (x) rho(r)) U^T+`` with ``rho(r) = (I + r.sigma)/2``, any norm of ``r``."""
    n = 2 * T + 1
    rho_c = (np.eye(2) + pauli_dot(r)) / 2.0
    e0 = np.zeros((n, n))
    e0[T, T] = 1.0
    UT = np.linalg.matrix_power(dense_walk_operator(T), T)
    return UT @ np.kron(e0, rho_c) @ UT.conj().T


def dense_expectation(T: int, r, B_dense: np.ndarray, A: np.ndarray) -> float:
    return float(np.trace(np.kron(B_dense, A) @ dense_rho(T, r)).real)


def dense_table(T: int, r, A_dirs, B_denses) -> np.ndarray:
    """Sixteen probabilities from dense projectors, indexed ``[a_idx, b_idx, i, j]``."""
    n = 2 * T + 1
    rho = dense_rho(T, r)
    p = np.zeros((2, 2, 2, 2))
    for i, j in itertools.product((0, 1), repeat=2):
        A = pauli_dot(A_dirs[i])
        for (ai, a), (bi, b) in itertools.product(enumerate((1, -1)), repeat=2):
            PA = (np.eye(2) + a * A) / 2.0
            PB = (np.eye(n) + b * B_denses[j]) / 2.0
            p[ai, bi, i, j] = float(np.trace(np.kron(PB, PA) @ rho).real)
    return p


def schmidt_coefficients_svd(amps: np.ndarray) -> tuple[float, float]:
    """Schmidt coefficients from the singular values of the (walker, coin) matrix."""
    s = np.linalg.svd(np.asarray(amps), compute_uv=False)
    return float(s[0]), float(s[1]) if s.size > 1 else 0.0


def brute_force_chsh(s0: float, s1: float, n_grid: int = 16) -> float:
    """
    Maximal CHSH of ``s0|00> + s1|11>`` over x-z plane observables.

    Correlators are computed from explicit two-qubit matrices. A coarse
    four-angle grid seeds a Nelder-Mead polish from its best few points.
    """
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = s0, s1
    # correlation tensor restricted to (z, x), from explicit Kronecker products
    paulis = (SZ, SX)
    C = np.array([[float((psi.conj() @ np.kron(P, Q) @ psi).real) for Q in paulis] for P in paulis])

    def unit(t):
        return np.stack([np.cos(t), np.sin(t)], axis=-1)

    def S(angles):
        a0, a1, b0, b1 = (unit(t) for t in angles)
        E = lambda a, b: a @ C @ b  # noqa: E731
        return E(a0, b0) + E(a0, b1) + E(a1, b0) - E(a1, b1)

    th = np.linspace(-math.pi, math.pi, n_grid, endpoint=False)
    U = unit(th)
    E = U @ C @ U.T
    grid = E[:, None, :, None] + E[:, None, None, :] + E[None, :, :, None] - E[None, :, None, :]
    best = -math.inf
    for idx in np.argsort(grid.ravel())[-5:]:
        x0 = [th[k] for k in np.unravel_index(idx, grid.shape)]
        res = minimize(lambda a: -S(a), x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        best = max(best, -res.fun)
    return best


def random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_walker_observable(rng, T: int):
    """Random dichotomic walker observable: sign, threshold, custom labels or Schmidt-aligned."""
    from walkbell.bell import DiagonalBinning, sign_binning, threshold_binning
    from walkbell.preparations import coin_state_from_direction
    from walkbell.schmidt import embed_subspace_observable, schmidt_decompose
    from walkbell.walk import evolve, init_walker_state

    kind = rng.integers(4)
    if kind == 0:
        return sign_binning(T, int(rng.choice([1, -1])))
    if kind == 1:
        return threshold_binning(T, int(rng.integers(0, T + 2)))
    if kind == 2:
        return DiagonalBinning(T, rng.choice([1.0, -1.0], size=2 * T + 1))
    while True:
        st = evolve(init_walker_state(T, *coin_state_from_direction(random_unit(rng))), T)
        sd = schmidt_decompose(st)
        if not sd.degenerate:
            return embed_subspace_observable(pauli_dot(random_unit(rng)), sd)


def walker_dense(B, T: int) -> np.ndarray:
    if hasattr(B, "labels"):
        return np.diag(B.labels).astype(complex)
    return B.dense()
