"""Explicit five-stage fourth-order low-storage Runge-Kutta and step control.

The classical 2N-storage coefficient set (Carpenter & Kennedy style) is
embedded as exact decimal rationals.  The stepper works on tuples of numpy
arrays so the elastic fields of both blocks and the fault state variables
advance together, with the right-hand side re-evaluated from the current
stage values (required for the stage-wise interface consistency).
"""

from __future__ import annotations

import math

import numpy as np

LSRK_A = (
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
)
LSRK_B = (
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
)
LSRK_C = (
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
)


def compute_dt(blocks, materials, cfl: float) -> float:
    """Explicit step from the grid-wise wave-traversal bound.

    ``dt = CFL min sqrt( h_xi^2 / ((cp^2 + cs^2) |grad xi|^2) )`` over all
    nodes, axes and blocks.
    """
    if not 0.0 < cfl <= 1.0:
        raise ValueError(f"CFL must lie in (0, 1], got {cfl}")
    best = math.inf
    for block, material in zip(blocks, materials):
        speed2 = material.cp ** 2 + material.cs ** 2
        for axis in range(3):
            g2 = (block.metrics[axis] ** 2).sum(axis=0)
            gmax = float(np.sqrt((speed2 * g2).max()))
            if gmax <= 0.0 or not math.isfinite(gmax):
                raise ValueError(f"degenerate metrics on axis {axis}")
            best = min(best, block.spacings[axis] / gmax)
    return cfl * best


def lsrk45_step(state_arrays, rhs, t, dt):
    """Advance a tuple of arrays by one step of the 2N-storage scheme.

    ``rhs(t, arrays) -> tuple of arrays`` (matching shapes; entries may be
    None for components that do not evolve).
    """
    arrays = [np.array(a, dtype=float, copy=True) for a in state_arrays]
    registers = [np.zeros_like(a) for a in arrays]
    for a_coef, b_coef, c_coef in zip(LSRK_A, LSRK_B, LSRK_C):
        rates = rhs(t + c_coef * dt, tuple(arrays))
        for reg, arr, rate in zip(registers, arrays, rates):
            if rate is None:
                continue
            reg *= a_coef
            reg += dt * np.asarray(rate)
            arr += b_coef * reg
    return tuple(arrays)
