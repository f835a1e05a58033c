"""P1/P1 finite elements for quasi-static Biot poroelasticity on the unit square.

Forms: a(u, v) = int sigma(u):eps(v), b(p, q) = (kappa/nu) int grad p . grad q,
c(p, q) = (1/M) int p q and d(v, q) = alpha int div(v) q.

The mesh splits each of the ``n x n`` cells into two right triangles. Nodes
are numbered row-major, ``id = j*(n+1) + i``; displacement unknowns are
blocked as ``[u_x at all nodes, u_y at all nodes]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .system import EllipticParabolicSystem, Profile

REQUIRED_KEYS = ("lambda", "mu", "kappa_over_nu", "M", "alpha")


@dataclass(frozen=True)
class BiotParameters:
    lam: float
    mu: float
    kappa_over_nu: float
    M_biot: float
    alpha: float

    def __post_init__(self):
        for name in ("lam", "mu", "kappa_over_nu", "M_biot", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Biot parameter {name} must be strictly positive, got {getattr(self, name)}")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "BiotParameters":
        missing = [key for key in REQUIRED_KEYS if key not in data]
        if missing:
            raise KeyError(f"Biot config is missing keys {missing}; required keys: {list(REQUIRED_KEYS)}")
        return cls(
            lam=float(data["lambda"]),
            mu=float(data["mu"]),
            kappa_over_nu=float(data["kappa_over_nu"]),
            M_biot=float(data["M"]),
            alpha=float(data["alpha"]),
        )

    def as_mapping(self) -> dict:
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "kappa_over_nu": self.kappa_over_nu,
            "M": self.M_biot,
            "alpha": self.alpha,
        }


REFERENCE_PARAMETERS = BiotParameters(lam=0.5, mu=0.125, kappa_over_nu=0.05, M_biot=0.27, alpha=0.5)


@dataclass(frozen=True)
class UnitSquareMesh:
    n: int
    coords: np.ndarray
    triangles: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @classmethod
    def uniform(cls, n: int) -> "UnitSquareMesh":
        x = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(x, x)
        coords = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(n), np.arange(n))
        i, j = i.ravel(), j.ravel()
        v00 = j * (n + 1) + i
        v10 = v00 + 1
        v11 = v10 + n + 1
        v01 = v00 + n + 1
        triangles = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
        on_edge = (
            np.isclose(coords[:, 0], 0.0)
            | np.isclose(coords[:, 0], 1.0)
            | np.isclose(coords[:, 1], 0.0)
            | np.isclose(coords[:, 1], 1.0)
        )
        return cls(
            n=n,
            coords=coords,
            triangles=triangles,
            interior=np.flatnonzero(~on_edge),
            boundary=np.flatnonzero(on_edge),
        )

    def geometry(self):
        """Per-triangle areas and barycentric gradients ``(area, bx, by)``."""
        P = self.coords[self.triangles]  # (T, 3, 2)
        x, y = P[..., 0], P[..., 1]
        det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
        area = 0.5 * np.abs(det)
        bx = (np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)) / det[:, None]
        by = (np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)) / det[:, None]
        return area, bx, by

    def midpoints(self) -> np.ndarray:
        """Edge midpoints ``(T, 3, 2)``; entry ``e`` lies opposite vertex ``e``."""
        P = self.coords[self.triangles]
        return 0.5 * (np.roll(P, -1, axis=1) + np.roll(P, -2, axis=1))


def _scatter(rows, cols, vals, shape):
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)


def assemble_operators(mesh: UnitSquareMesh, params: BiotParameters) -> dict[str, sp.csr_matrix]:
    """Full (boundary-inclusive) matrices ``A``, ``B``, ``C``, ``D``."""
    N = mesh.n_nodes
    area, bx, by = mesh.geometry()
    tri = mesh.triangles
    a = area[:, None, None]
    BxBx = bx[:, :, None] * bx[:, None, :]
    ByBy = by[:, :, None] * by[:, None, :]
    ByBx = by[:, :, None] * bx[:, None, :]
    BxBy = bx[:, :, None] * by[:, None, :]
    lam, mu = params.lam, params.mu
    Kxx = a * (2 * mu * (BxBx + 0.5 * ByBy) + lam * BxBx)
    Kyy = a * (2 * mu * (ByBy + 0.5 * BxBx) + lam * ByBy)
    Kxy = a * (mu * ByBx + lam * BxBy)

    R = np.broadcast_to(tri[:, :, None], Kxx.shape)
    Cc = np.broadcast_to(tri[:, None, :], Kxx.shape)
    A = (
        _scatter(R, Cc, Kxx, (2 * N, 2 * N))
        + _scatter(R + N, Cc + N, Kyy, (2 * N, 2 * N))
        + _scatter(R, Cc + N, Kxy, (2 * N, 2 * N))
        + _scatter(R + N, Cc, np.transpose(Kxy, (0, 2, 1)), (2 * N, 2 * N))
    )
    B = _scatter(R, Cc, params.kappa_over_nu * a * (BxBx + ByBy), (N, N))
    mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    C = _scatter(R, Cc, (a / params.M_biot) * mass, (N, N))
    # d(v, q) with q = phi_b (rows), v = phi_a e_x or phi_a e_y (columns)
    Dx = params.alpha * a * (np.ones(3)[None, :, None] / 3.0) * bx[:, None, :]
    Dy = params.alpha * a * (np.ones(3)[None, :, None] / 3.0) * by[:, None, :]
    D = _scatter(R, Cc, Dx, (N, 2 * N)) + _scatter(R, Cc + N, Dy, (N, 2 * N))
    return {"A": A, "B": B, "C": C, "D": D}


def load_vector(mesh: UnitSquareMesh, func) -> np.ndarray:
    """``int func * phi_a`` by the 3-point edge-midpoint rule (degree-2 exact)."""
    area, _, _ = mesh.geometry()
    mid = mesh.midpoints()
    vals = func(mid[..., 0], mid[..., 1])  # (T, 3) at midpoints opposite each vertex
    # phi_a is 1/2 at the two midpoints adjacent to vertex a, 0 at the opposite one
    local = (area / 3.0)[:, None] * 0.5 * (vals.sum(axis=1)[:, None] - vals)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def biot_exact(t, x, y, amplitude: float = 10.0, rate: float = 5.0 / 21.0):
    """Manufactured solution ``(u_x, u_y, p)`` at time ``t``."""
    s = amplitude * np.exp(-rate * t)
    sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
    sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
    return -s * cx * sy, -s * sx * cy, s * sx * sy


def manufactured_forcing(params: BiotParameters) -> dict:
    """Strong-form forcing of the manufactured solution, split by time factor.

    With ``phi = sin(pi x) sin(pi y)``, ``p = s phi`` and
    ``u = -(s/pi) grad(phi)``: ``f = s * (fx, fy)`` and
    ``g = s' * g_sdot + s * g_s``.
    """
    pi = np.pi
    fac = params.alpha - 2 * pi * (2 * params.mu + params.lam)
    return {
        "fx": lambda x, y: fac * pi * np.cos(pi * x) * np.sin(pi * y),
        "fy": lambda x, y: fac * pi * np.sin(pi * x) * np.cos(pi * y),
        "g_sdot": lambda x, y: (2 * pi * params.alpha + 1.0 / params.M_biot) * np.sin(pi * x) * np.sin(pi * y),
        "g_s": lambda x, y: 2 * pi**2 * params.kappa_over_nu * np.sin(pi * x) * np.sin(pi * y),
    }


def build_biot_problem(
    n_mesh: int,
    params: BiotParameters = REFERENCE_PARAMETERS,
    amplitude: float = 10.0,
    rate: float = 5.0 / 21.0,
) -> EllipticParabolicSystem:
    """Biot system with the manufactured solution ``p = s(t) sin(pi x) sin(pi y)``.

    The displacement ``u = -(s/pi) grad(sin(pi x) sin(pi y))`` does not vanish
    on the boundary. Its nodal boundary values are lifted into the loads so
    the unknowns are the interior nodal values of ``u`` and ``p``.
    """
    if n_mesh < 4 or n_mesh & (n_mesh - 1):
        raise ValueError(f"mesh too coarse or not a power of two: n_mesh={n_mesh} (need n_mesh >= 4)")
    mesh = UnitSquareMesh.uniform(n_mesh)
    ops = assemble_operators(mesh, params)
    N = mesh.n_nodes
    I, Bn = mesh.interior, mesh.boundary
    Iu = np.concatenate([I, I + N])
    Bu = np.concatenate([Bn, Bn + N])

    A_full, D_full = ops["A"], ops["D"]
    A = A_full[Iu][:, Iu]
    B = ops["B"][I][:, I]
    C = ops["C"][I][:, I]
    D = D_full[I][:, Iu]

    forcing = manufactured_forcing(params)
    Fx = load_vector(mesh, forcing["fx"])
    Fy = load_vector(mesh, forcing["fy"])
    G_sdot = load_vector(mesh, forcing["g_sdot"])
    G_s = load_vector(mesh, forcing["g_s"])
    ux_b, uy_b, _ = biot_exact(0.0, mesh.coords[:, 0], mesh.coords[:, 1], amplitude=1.0, rate=0.0)
    u_bnd = np.concatenate([ux_b, uy_b])[Bu]

    F = np.concatenate([Fx, Fy])[Iu] - A_full[Iu][:, Bu] @ u_bnd
    G_dot = G_sdot[I] - D_full[I][:, Bu] @ u_bnd
    G_val = G_s[I]

    s = Profile.exponential(amplitude, rate)
    xi, yi = mesh.coords[I, 0], mesh.coords[I, 1]

    def exact_u(t):
        ux, uy, _ = biot_exact(t, xi, yi, amplitude, rate)
        return np.concatenate([ux, uy])

    def exact_p(t):
        return biot_exact(t, xi, yi, amplitude, rate)[2]

    def f(t):
        return s.value(t) * F

    def f_dot(t):
        return s.derivative(t) * F

    def g(t):
        return s.derivative(t) * G_dot + s.value(t) * G_val

    # consistent initial displacement for the interpolated initial pressure
    p0 = exact_p(0.0)
    u0 = spla.spsolve(sp.csc_matrix(A), f(0.0) + D.T @ p0)
    return EllipticParabolicSystem(
        A=A, B=B, C=C, D=D, f=f, g=g, u0=u0, p0=p0, f_dot=f_dot,
        exact_u=exact_u, exact_p=exact_p, name=f"biot-{n_mesh}",
    )
