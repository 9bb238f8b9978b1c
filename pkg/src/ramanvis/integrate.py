"""Adaptive Runge-Kutta propagation of linear systems ``dx/dt = M x``."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp

__all__ = ["IntegrationError", "propagate"]


class IntegrationError(RuntimeError):
    """The adaptive integrator failed to reach the requested tolerance."""


def propagate(
    m: NDArray,
    x0: NDArray,
    t_grid: NDArray,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "DOP853",
) -> NDArray[np.complex128]:
    """Integrate ``dx/dt = m @ x`` from ``x0`` and sample at ``t_grid``.

    Uses an embedded explicit Runge-Kutta pair (Dormand-Prince 8(5,3) by
    default) with per-step error control. Returns an array of shape
    ``(len(t_grid), len(x0))``.

    Raises
    ------
    IntegrationError
        If the step size collapses or the solver otherwise gives up.
    """
    m = np.asarray(m, dtype=complex)
    x0 = np.asarray(x0, dtype=complex)
    t = np.asarray(t_grid, dtype=float)
    if t.size == 1:
        return x0[None, :].copy()

    sol = solve_ivp(
        lambda _t, x: m @ x,
        (t[0], t[-1]),
        x0,
        method=method,
        t_eval=t,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise IntegrationError(f"integration failed: {sol.message}")
    return sol.y.T.copy()
