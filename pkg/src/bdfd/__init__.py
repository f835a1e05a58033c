"""Semi-explicit BDF-k time stepping for elliptic-parabolic systems.

The package splits into

* :mod:`bdfd.stencils`     -- exact BDF and delay-extrapolation coefficients,
* :mod:`bdfd.gstability`   -- multiplier vectors, G matrices and spectrum scans,
* :mod:`bdfd.numerics`     -- CG, cyclic Jacobi and generalized power iteration,
* :mod:`bdfd.problems`     -- spectral, P1 Biot and advanced-DDE test problems,
* :mod:`bdfd.integrators`  -- decoupled, monolithic and reduced schemes,
* :mod:`bdfd.cli`          -- command line front end.
"""

from .stencils import (
    BdfScheme,
    DelayStencil,
    apply_bdf,
    apply_delay,
    bdf_coefficients,
    delay_coefficients,
)

__all__ = [
    "BdfScheme",
    "DelayStencil",
    "apply_bdf",
    "apply_delay",
    "bdf_coefficients",
    "delay_coefficients",
]

__version__ = "0.1.0"
