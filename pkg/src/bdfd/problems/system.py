"""The abstract elliptic-parabolic system

    A u - D^T p = f,     D du/dt + C dp/dt + B p = g,

stored with sparse operators and time-dependent loads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeError
from ..numerics import sparse_rect, sparse_symmetric

Load = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class Profile:
    """Scalar time profile with its derivative."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]

    def __call__(self, t: float) -> float:
        return self.value(t)

    @classmethod
    def exponential(cls, amplitude: float = 1.0, rate: float = 1.0) -> "Profile":
        return cls(
            lambda t: amplitude * np.exp(-rate * t),
            lambda t: -rate * amplitude * np.exp(-rate * t),
        )

    @classmethod
    def oscillating(cls, amplitude: float = 1.0, omega: float = 1.0, offset: float = 0.0) -> "Profile":
        """``offset + amplitude * cos(omega t)``."""
        return cls(
            lambda t: offset + amplitude * np.cos(omega * t),
            lambda t: -amplitude * omega * np.sin(omega * t),
        )

    @classmethod
    def constant(cls, value: float = 1.0) -> "Profile":
        return cls(lambda t: value, lambda t: 0.0)


@dataclass(frozen=True)
class EllipticParabolicSystem:
    """Sparse operators, loads and (optionally) the exact solution.

    ``f_dot`` is the time derivative of ``f``; only the reduced pressure
    formulation needs it. ``exact_u``/``exact_p`` map ``t`` to nodal vectors.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    f: Load
    g: Load
    u0: np.ndarray
    p0: np.ndarray
    f_dot: Load | None = None
    exact_u: Load | None = None
    exact_p: Load | None = None
    name: str = "system"

    def __post_init__(self):
        for key in ("A", "B", "C"):
            object.__setattr__(self, key, sparse_symmetric(getattr(self, key)))
        object.__setattr__(self, "D", sparse_rect(self.D))
        nu, npr = self.A.shape[0], self.C.shape[0]
        if self.B.shape != (npr, npr) or self.D.shape != (npr, nu):
            raise ShapeError(
                f"inconsistent operator shapes: A {self.A.shape}, B {self.B.shape}, "
                f"C {self.C.shape}, D {self.D.shape}"
            )
        object.__setattr__(self, "u0", np.asarray(self.u0, dtype=float))
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        if self.u0.shape != (nu,) or self.p0.shape != (npr,):
            raise ShapeError(f"initial data shapes {self.u0.shape}, {self.p0.shape} do not match ({nu}, {npr})")

    @property
    def dim_u(self) -> int:
        return self.A.shape[0]

    @property
    def dim_p(self) -> int:
        return self.C.shape[0]

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None and self.exact_p is not None

    def initial_defect(self) -> float:
        """``||A u0 - D^T p0 - f(0)||`` scaled by ``||f(0)|| + 1``."""
        f0 = self.f(0.0)
        r = self.A @ self.u0 - self.D.T @ self.p0 - f0
        return float(np.linalg.norm(r) / (np.linalg.norm(f0) + 1.0))
