"""
Hadamard coined quantum walk on a finite window of the integer line.

States are stored as a ``(2*t_max + 1, 2)`` complex array indexed by
``(x + t_max, c)``: walker position first, coin second. The window never
truncates anything as long as ``steps_taken <= t_max``, because a
nearest-neighbour walk started at the origin stays inside ``|x| <= steps``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "LatticeState",
    "WindowExhausted",
    "init_walker_state",
    "step",
    "evolve",
    "position_distribution",
    "PositionDistribution",
    "HADAMARD",
]

INV_SQRT2 = 1.0 / np.sqrt(2.0)
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) * INV_SQRT2


class WindowExhausted(ValueError):
    """Raised when a step would push amplitude outside the lattice window."""


@dataclass(frozen=True)
class LatticeState:
    t_max: int
    steps_taken: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2 * self.t_max + 1, 2):
            raise ValueError(
                f"amplitudes must have shape {(2 * self.t_max + 1, 2)}, got {amps.shape}"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(-self.t_max, self.t_max + 1)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def amp(self, x: int, c: int) -> complex:
        """Amplitude on site ``x`` with coin value ``c``."""
        return complex(self.amplitudes[x + self.t_max, c])


def init_walker_state(t_max: int, coin_amp0: complex, coin_amp1: complex) -> LatticeState:
    """Walker localized at the origin with the given coin amplitudes."""
    if t_max < 0:
        raise ValueError(f"t_max must be nonnegative, got {t_max}")
    norm2 = abs(coin_amp0) ** 2 + abs(coin_amp1) ** 2
    if abs(norm2 - 1.0) > 1e-12:
        raise ValueError(f"coin amplitudes are not normalized: |a0|^2 + |a1|^2 = {norm2!r}")
    amps = np.zeros((2 * t_max + 1, 2), dtype=np.complex128)
    amps[t_max, 0] = coin_amp0
    amps[t_max, 1] = coin_amp1
    return LatticeState(t_max, 0, amps)


def _step_array(amps: np.ndarray) -> np.ndarray:
    h0 = (amps[:, 0] + amps[:, 1]) * INV_SQRT2
    h1 = (amps[:, 0] - amps[:, 1]) * INV_SQRT2
    out = np.zeros_like(amps)
    # coin 0 moves left, coin 1 moves right
    out[:-1, 0] = h0[1:]
    out[1:, 1] = h1[:-1]
    return out


def step(state: LatticeState) -> LatticeState:
    """One application of U = S (I_w x H)."""
    if state.steps_taken >= state.t_max:
        raise WindowExhausted(
            f"window of half-width {state.t_max} exhausted after {state.steps_taken} steps"
        )
    return LatticeState(state.t_max, state.steps_taken + 1, _step_array(state.amplitudes))


def evolve(state: LatticeState, n_steps: int) -> LatticeState:
    if n_steps < 0:
        raise ValueError(f"n_steps must be nonnegative, got {n_steps}")
    if state.steps_taken + n_steps > state.t_max:
        raise WindowExhausted(
            f"cannot take {n_steps} steps from {state.steps_taken} in a window of "
            f"half-width {state.t_max}"
        )
    if n_steps == 0:
        return state
    amps = np.array(state.amplitudes)
    for _ in range(n_steps):
        amps = _step_array(amps)
    return LatticeState(state.t_max, state.steps_taken + n_steps, amps)


class PositionDistribution(NamedTuple):
    positions: np.ndarray
    probabilities: np.ndarray
    has_negative: bool


def position_distribution(
    states: Sequence[tuple[float, LatticeState]],
) -> PositionDistribution:
    """
    Weighted position marginal ``P(x) = sum_k w_k sum_c |amp_k(x, c)|^2``.

    Weights may be negative (signed ensembles); the result is reported raw,
    with ``has_negative`` set when any entry falls below zero.
    """
    if not states:
        raise ValueError("need at least one state")
    total = float(sum(w for w, _ in states))
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {total!r}")
    ref = states[0][1]
    P = np.zeros(2 * ref.t_max + 1)
    for w, st in states:
        if st.t_max != ref.t_max or st.steps_taken != ref.steps_taken:
            raise ValueError("all states must share t_max and steps_taken")
        P += w * np.sum(np.abs(st.amplitudes) ** 2, axis=1)
    return PositionDistribution(ref.positions, P, bool(np.any(P < 0)))
