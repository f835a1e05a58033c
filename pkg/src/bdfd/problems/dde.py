"""Method of steps for the advanced-type delay system

    y' = z,   z(t) + y(t) = z(t-1) + z'(t-1),

with history ``y(t) = y0 + sin(n pi t)/n`` on ``[-1, 0]``. Writing
``h(t) = z(t-1) + z'(t-1)`` turns each unit interval into the ODE
``y' = h(t) - y``. On ``[0, 1]`` the forcing comes from the history in closed
form; later intervals differentiate the previous interval's ``z``
numerically, so every step loses one derivative and the solution grows
with ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class DdeDemoResult:
    n: int
    y0: float
    t: np.ndarray
    y: np.ndarray
    sup_norms: tuple[float, float, float, float]
    max_jump: float

    def history(self, t: float) -> float:
        return self.y0 + np.sin(self.n * np.pi * t) / self.n


def _rk4(forcing, y_start: float, t0: float, dt: float, steps: int) -> np.ndarray:
    y = np.empty(steps + 1)
    y[0] = y_start
    for i in range(steps):
        t = t0 + i * dt
        k1 = forcing(t) - y[i]
        k2 = forcing(t + 0.5 * dt) - (y[i] + 0.5 * dt * k1)
        k3 = forcing(t + 0.5 * dt) - (y[i] + 0.5 * dt * k2)
        k4 = forcing(t + dt) - (y[i] + dt * k3)
        y[i + 1] = y[i] + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return y


def first_interval_exact(t, n: int, y0: float):
    """Closed-form solution on ``[0, 1]``."""
    return (y0 - np.pi * np.cos(n * np.pi)) * np.exp(-t) + np.pi * np.cos(n * np.pi * (t - 1.0))


def dde_demo(n: int, y0: float = 1.0, inner_steps: int = 4000) -> DdeDemoResult:
    if n < 1:
        raise ValueError(f"frequency parameter must be >= 1, got n={n}")
    if inner_steps < 1000:
        raise ValueError(f"inner_steps must be >= 1000, got {inner_steps}")
    dt = 1.0 / inner_steps
    local = np.linspace(0.0, 1.0, inner_steps + 1)
    w = n * np.pi

    hist_t = local - 1.0
    hist_y = y0 + np.sin(w * hist_t) / n
    times, values = [hist_t], [hist_y]

    # interval [0, 1]: h(t) = z(t-1) + z'(t-1) from the history
    def h1(t):
        return np.pi * np.cos(w * (t - 1.0)) - n * np.pi**2 * np.sin(w * (t - 1.0))

    y = _rk4(h1, hist_y[-1], 0.0, dt, inner_steps)
    z = h1(local) - y
    times.append(local)
    values.append(y)
    jumps = [abs(y[0] - hist_y[-1])]

    for j in (1, 2):
        dz = np.gradient(z, dt, edge_order=2)
        # h on [j, j+1] is z + z' from [j-1, j], stored in local time
        spline = CubicSpline(local, z + dz)
        forcing = lambda t, s=spline, j=j: float(s(t - j))  # noqa: E731
        y_prev_end = y[-1]
        y = _rk4(forcing, y_prev_end, float(j), dt, inner_steps)
        jumps.append(abs(y[0] - y_prev_end))
        z = spline(local) - y
        times.append(local + j)
        values.append(y)

    sups = tuple(float(np.max(np.abs(v))) for v in values)
    t_all = np.concatenate([times[0]] + [tt[1:] for tt in times[1:]])
    y_all = np.concatenate([values[0]] + [vv[1:] for vv in values[1:]])
    return DdeDemoResult(n=n, y0=y0, t=t_all, y=y_all, sup_norms=sups, max_jump=max(jumps))


def growth_exponent(ns, values) -> float | None:
    """Least-squares slope of ``log(values)`` against ``log(ns)``; ``None`` for one point."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(ns) < 2:
        return None
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])
