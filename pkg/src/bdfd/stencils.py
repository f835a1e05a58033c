"""Exact coefficient tables for the BDF-k operator and the delay stencil.

Every sequence in this package is passed newest-first: ``values[0]`` is
``y^n``, ``values[1]`` is ``y^{n-1}`` and so on.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .errors import ShapeError, UnsupportedOrderError

MAX_BDF_ORDER = 3
MAX_DELAY = 4

_BDF_TABLE = {
    1: (Fraction(1), Fraction(-1)),
    2: (Fraction(3, 2), Fraction(-2), Fraction(1, 2)),
    3: (Fraction(11, 6), Fraction(-3), Fraction(3, 2), Fraction(-1, 3)),
}


@dataclass(frozen=True)
class BdfScheme:
    """BDF-k operator ``(1/tau) * sum_l xi[l] * y^{n-l}``."""

    k: int
    xi: tuple[Fraction, ...]

    @property
    def steps(self) -> int:
        return self.k

    def as_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.xi])


@dataclass(frozen=True)
class DelayStencil:
    """Extrapolation ``sum_l c[l-1] * p^{n-l}`` over ``delta`` past values."""

    delta: int
    c: tuple[int, ...]

    @property
    def steps(self) -> int:
        return self.delta

    def as_array(self) -> np.ndarray:
        return np.array(self.c, dtype=float)


def bdf_coefficients(k: int) -> BdfScheme:
    if k not in _BDF_TABLE:
        raise UnsupportedOrderError(
            f"BDF order k={k} is not supported; supported range is 1 <= k <= {MAX_BDF_ORDER}"
        )
    return BdfScheme(k=k, xi=_BDF_TABLE[k])


def delay_coefficients(delta: int) -> DelayStencil:
    """Lagrange extrapolation weights ``c_l = (-1)**(l-1) * binom(delta, l)``."""
    if delta < 1:
        raise ValueError(f"delay count must be positive, got delta={delta}")
    if delta > MAX_DELAY:
        raise UnsupportedOrderError(
            f"delay count delta={delta} is not supported; supported range is 1 <= delta <= {MAX_DELAY}"
        )
    return DelayStencil(
        delta=delta,
        c=tuple((-1) ** (l - 1) * comb(delta, l) for l in range(1, delta + 1)),
    )


def _stack(values: Sequence, expected: int, what: str) -> np.ndarray:
    if len(values) != expected:
        raise ShapeError(f"{what} needs exactly {expected} entries, got {len(values)}")
    arrays = [np.asarray(v, dtype=float) for v in values]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ShapeError(f"{what}: inconsistent state shapes {shape} and {a.shape}")
    return np.stack(arrays)


def apply_bdf(scheme: BdfScheme, values: Sequence, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"step size must be positive, got tau={tau}")
    stacked = _stack(values, scheme.k + 1, "apply_bdf")
    return np.tensordot(scheme.as_array(), stacked, axes=1) / tau


def apply_delay(stencil: DelayStencil, history: Sequence) -> np.ndarray:
    stacked = _stack(history, stencil.delta, "apply_delay")
    return np.tensordot(stencil.as_array(), stacked, axes=1)
