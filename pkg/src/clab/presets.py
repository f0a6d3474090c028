"""Named coefficient presets used by the CLI and the experiment suites."""

from __future__ import annotations

import numpy as np

from .errors import ConfigParse
from .geometry import PolarGrid
from .pde import SystemCoefficients, make_coefficients


def heat(grid: PolarGrid) -> SystemCoefficients:
    """Scalar heat operator, unit diffusion, Robin eta=1 on both circles."""
    return make_coefficients(grid, n=1, beta=1.0, eta=1.0)


def advection(grid: PolarGrid, speed: float = 0.5) -> SystemCoefficients:
    """Heat plus a constant angular drift."""
    b = np.zeros((1, 2) + grid.shape)
    b[0, 1] = speed
    return make_coefficients(grid, n=1, b=b, beta=1.0, eta=1.0)


def coupled2(grid: PolarGrid) -> SystemCoefficients:
    """Two components with mutually cooperative coupling c12 = c21 = -1."""
    c = np.zeros((2, 2) + grid.shape)
    c[0, 1] = -1.0
    c[1, 0] = -1.0
    return make_coefficients(grid, n=2, c=c, beta=1.0, eta=1.0)


_PRESETS = {"heat": heat, "advection": advection, "coupled2": coupled2}


def get_preset(name: str, grid: PolarGrid) -> SystemCoefficients:
    try:
        builder = _PRESETS[name]
    except KeyError:
        raise ConfigParse(
            f"unknown coefficient preset {name!r}; "
            f"available: {sorted(_PRESETS)}") from None
    return builder(grid)
