"""Joint probability tables for the (2,2,2) CHSH scenario and their checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OUTCOMES",
    "JointTable",
    "BellReport",
    "check_admissible",
    "check_no_signaling",
    "bell_report",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-9

# index 0 <-> outcome +1, index 1 <-> outcome -1
OUTCOMES = (1, -1)


@dataclass
class JointTable:
    """
    Sixteen probabilities ``p(a, b | i, j)``.

    ``p`` has shape ``(2, 2, 2, 2)`` and is indexed ``[a_idx, b_idx, i, j]``
    where ``a_idx = 0`` stands for ``a = +1``. Entries are never clamped.
    """

    p: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (2, 2, 2, 2):
            raise ValueError(f"table must have shape (2, 2, 2, 2), got {self.p.shape}")

    def prob(self, a: int, b: int, i: int, j: int) -> float:
        return float(self.p[OUTCOMES.index(a), OUTCOMES.index(b), i, j])

    def correlators(self) -> np.ndarray:
        """``E[i, j] = sum_{a,b} a b p(a, b | i, j)``."""
        sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
        return np.einsum("ab,abij->ij", sign, self.p)

    def chsh(self) -> float:
        E = self.correlators()
        return float(E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1])

    def normalization_error(self) -> float:
        return float(np.max(np.abs(self.p.sum(axis=(0, 1)) - 1.0)))

    def min_p(self) -> float:
        return float(self.p.min())

    def rows(self):
        """Yield ``(a, b, i, j, p)`` in a fixed order."""
        for ai, a in enumerate(OUTCOMES):
            for bi, b in enumerate(OUTCOMES):
                for i in (0, 1):
                    for j in (0, 1):
                        yield a, b, i, j, float(self.p[ai, bi, i, j])

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "entries": [
                {"a": a, "b": b, "i": i, "j": j, "p": p} for a, b, i, j, p in self.rows()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointTable":
        p = np.zeros((2, 2, 2, 2))
        for e in d["entries"]:
            p[OUTCOMES.index(e["a"]), OUTCOMES.index(e["b"]), e["i"], e["j"]] = e["p"]
        return cls(p, d.get("tol", DEFAULT_TOL))


def check_admissible(t: JointTable) -> tuple[bool, float]:
    """Nonnegativity (up to ``t.tol``) and per-setting normalization."""
    min_p = t.min_p()
    ok = min_p >= -t.tol and t.normalization_error() <= t.tol
    return bool(ok), min_p


def check_no_signaling(t: JointTable) -> tuple[bool, float]:
    # Alice marginal may not depend on j, Bob marginal may not depend on i
    alice = t.p.sum(axis=1)  # [a, i, j]
    bob = t.p.sum(axis=0)  # [b, i, j]
    dev_a = np.max(np.abs(alice[:, :, 0] - alice[:, :, 1]))
    dev_b = np.max(np.abs(bob[:, 0, :] - bob[:, 1, :]))
    dev = float(max(dev_a, dev_b))
    return dev <= t.tol, dev


@dataclass
class BellReport:
    E00: float
    E01: float
    E10: float
    E11: float
    S: float
    min_p: float
    ns_deviation: float
    admissible: bool
    no_signaling: bool

    @property
    def correlators(self) -> tuple[float, float, float, float]:
        return (self.E00, self.E01, self.E10, self.E11)

    @property
    def accepted(self) -> bool:
        return self.admissible and self.no_signaling

    def to_dict(self) -> dict:
        return {
            "E00": self.E00,
            "E01": self.E01,
            "E10": self.E10,
            "E11": self.E11,
            "S": self.S,
            "abs_S": abs(self.S),
            "min_p": self.min_p,
            "ns_deviation": self.ns_deviation,
            "admissible": self.admissible,
            "no_signaling": self.no_signaling,
        }


def bell_report(t: JointTable) -> BellReport:
    E = t.correlators()
    adm, min_p = check_admissible(t)
    ns, dev = check_no_signaling(t)
    return BellReport(
        float(E[0, 0]),
        float(E[0, 1]),
        float(E[1, 0]),
        float(E[1, 1]),
        float(E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1]),
        min_p,
        dev,
        adm,
        ns,
    )
