"""Diagonal test problem: A = C = I, D = diag(sqrt(mu_i)), B = diag(b_i).

Each pressure mode decouples, and the generalized eigenvalues of
``D A^{-1} D^T`` against ``C`` are the ``mu_i`` themselves.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .system import EllipticParabolicSystem, Profile


def build_spectral_problem(
    mu_values,
    b_values,
    mms: Profile | None = None,
    amplitudes=None,
    load: Profile | None = None,
    load_amplitudes=None,
) -> EllipticParabolicSystem:
    """Manufactured diagonal problem with exact solution ``p_i(t) = mms(t) * amp_i``.

    The elastic load is ``f(t) = load(t) * load_amplitudes``; ``u`` then
    follows from the first equation, and ``g`` is chosen so the exact pair
    solves the second one identically.
    """
    mu = np.asarray(mu_values, dtype=float)
    b = np.asarray(b_values, dtype=float)
    if mu.ndim != 1 or b.shape != mu.shape:
        raise ValueError("mu_values and b_values must be vectors of equal length")
    if np.any(mu < 0):
        raise ValueError(f"coupling values must be non-negative, got {mu}")
    if np.any(b <= 0):
        raise ValueError("b_values must be strictly positive")
    n = len(mu)
    mms = mms or Profile.exponential()
    load = load or mms
    amp = np.ones(n) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    famp = np.ones(n) if load_amplitudes is None else np.asarray(load_amplitudes, dtype=float)
    d = np.sqrt(mu)

    def exact_p(t):
        return mms.value(t) * amp

    def exact_u(t):
        return load.value(t) * famp + d * exact_p(t)

    def f(t):
        return load.value(t) * famp

    def f_dot(t):
        return load.derivative(t) * famp

    def g(t):
        u_dot = load.derivative(t) * famp + d * mms.derivative(t) * amp
        return d * u_dot + mms.derivative(t) * amp + b * exact_p(t)

    eye = sp.identity(n, format="csr")
    return EllipticParabolicSystem(
        A=eye,
        B=sp.diags(b, format="csr"),
        C=eye,
        D=sp.diags(d, format="csr"),
        f=f,
        g=g,
        u0=exact_u(0.0),
        p0=exact_p(0.0),
        f_dot=f_dot,
        exact_u=exact_u,
        exact_p=exact_p,
        name="spectral",
    )
