"""First-order two-time correlations via the quantum regression theorem.

For ``<A(t+tau) B(t)>`` the regression theorem evolves the operator-weighted
state ``chi(tau) = exp(L tau)[B rho(t)]`` with the same generator as the
density matrix and reads out ``tr(A chi(tau))``. In the row-major vectorisation
used by :mod:`ramanvis.core`, ``tr(s_ij chi) = chi_ji``, so

* Rayleigh (``A = s32``, ``B = s23``): ``chi(0)`` is row 2 of ``s23 rho``,
  i.e. ``<s13>, <s23>, <s33>`` in slots ``(2,1), (2,2), (2,3)``; read ``(2,3)``.
* Raman (``A = s31``, ``B = s13``): ``<s13>, <s23>, <s33>`` in slots
  ``(1,1), (1,2), (1,3)``; read ``(1,3)``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import DensityMatrix, Liouvillian, SystemParams, build_liouvillian, quasi_steady_state, slot
from .integrate import propagate
from .spectral import gamma_sp_spectral

__all__ = [
    "Channel",
    "CorrelationTrace",
    "ValidityWarning",
    "VALIDITY_LIMIT",
    "sigma",
    "qrt_initial_vector",
    "readout_slot",
    "two_time",
    "g1",
    "tau_grid",
    "check_validity",
]

# gamma_SP * tau_max above which multi-photon scattering in the window matters
VALIDITY_LIMIT = 0.5


class ValidityWarning(UserWarning):
    """Delay grid extends beyond the weak-excitation validity regime."""


class Channel(str, enum.Enum):
    RAYLEIGH = "rayleigh"
    RAMAN = "raman"


def sigma(i: int, j: int) -> NDArray[np.complex128]:
    """Transition operator ``|i><j|`` (1-based levels)."""
    op = np.zeros((3, 3), complex)
    op[i - 1, j - 1] = 1.0
    return op


# (emitted-photon operator B at time t, its adjoint read at t + tau)
_CHANNEL_OPS = {
    Channel.RAYLEIGH: ((2, 3), (3, 2)),
    Channel.RAMAN: ((1, 3), (3, 1)),
}


def readout_slot(channel: Channel) -> int:
    """Slot of ``chi`` holding ``<A(t+tau) B(t)>`` for the channel."""
    (_, _), (i, j) = _CHANNEL_OPS[Channel(channel)]
    return slot(j, i)


def qrt_initial_vector(channel: Channel, state: DensityMatrix) -> NDArray[np.complex128]:
    """Vectorised ``B rho`` for the channel's emission operator ``B``.

    Only three slots can be non-zero; they carry ``<s13>``, ``<s23>`` and
    ``<s33>`` of ``state`` (``s_ij s_kl = delta_jk s_il``).
    """
    (bi, bj), _ = _CHANNEL_OPS[Channel(channel)]
    return (sigma(bi, bj) @ state.rho).reshape(9)


def two_time(
    L: Liouvillian,
    a_op: NDArray,
    b_op: NDArray,
    state: DensityMatrix,
    taus,
    *,
    reverse: bool = False,
    rtol: float = 1e-10,
    atol: float = 1e-13,
) -> NDArray[np.complex128]:
    """Two-time correlator by regression.

    ``reverse=False`` gives ``<A(t+tau) B(t)>``; ``reverse=True`` gives
    ``<A(t) B(t+tau)>`` by evolving ``rho A`` and reading ``tr(B chi)``.
    """
    taus = _check_taus(taus)
    if reverse:
        chi0, read = state.rho @ a_op, b_op
    else:
        chi0, read = b_op @ state.rho, a_op
    chi = propagate(L.m, chi0.reshape(9), taus, rtol=rtol, atol=atol)
    # tr(R X) = sum_ij R_ij X_ji
    return chi @ read.T.reshape(9)


@dataclass(frozen=True)
class CorrelationTrace:
    """Normalised first-order correlation ``g1(tau)`` of one channel."""

    channel: Channel
    tau: NDArray[np.float64]
    g1: NDArray[np.complex128]

    @property
    def abs(self) -> NDArray[np.float64]:
        return np.abs(self.g1)

    def columns(self) -> dict[str, NDArray]:
        return {
            "tau_ns": self.tau,
            "re_g1": self.g1.real,
            "im_g1": self.g1.imag,
            "abs_g1": np.abs(self.g1),
        }


def _check_taus(taus) -> NDArray[np.float64]:
    t = np.asarray(taus, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("tau grid must be a non-empty 1-D sequence")
    if t[0] != 0.0:
        raise ValueError(f"tau grid must start at 0, starts at {t[0]}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("tau grid must be strictly ascending")
    return t


def check_validity(gamma_sp: float, tau_max: float, limit: float = VALIDITY_LIMIT) -> bool:
    """Warn (and return False) when ``gamma_sp * tau_max`` exceeds ``limit``."""
    x = gamma_sp * tau_max
    if x > limit:
        warnings.warn(
            f"gamma_SP * tau_max = {x:.3g} exceeds {limit}: multi-photon scattering "
            "within the delay window is not negligible",
            ValidityWarning,
            stacklevel=3,
        )
        return False
    return True


def g1(
    channel: Channel,
    p: SystemParams,
    taus,
    *,
    state: DensityMatrix | None = None,
) -> CorrelationTrace:
    """Normalised correlation ``<A(t+tau) B(t)> / <s33(t)>``.

    The anchor time ``t`` sits in the quasi-steady state unless another
    ``state`` is supplied (diagnostics).
    """
    channel = Channel(channel)
    taus = _check_taus(taus)
    if p.omega <= 0:
        raise ValueError("g1 needs a non-zero drive (omega > 0)")
    if state is None:
        state, _ = quasi_steady_state(p)
    check_validity(gamma_sp_spectral(p), taus[-1])
    pop3 = state[3, 3].real
    if pop3 <= 0:
        raise ValueError("anchor state has no excited-state population")
    # normalise before integrating so the error control acts on O(1) values
    zeta0 = qrt_initial_vector(channel, state) / pop3
    chi = propagate(build_liouvillian(p).m, zeta0, taus, rtol=1e-11, atol=1e-13)
    return CorrelationTrace(channel, taus, chi[:, readout_slot(channel)])


def tau_grid(tau_max: float, n: int = 101, spacing: str = "linear") -> NDArray[np.float64]:
    """Delay grid starting at 0; ``spacing='log'`` clusters points near 0."""
    if tau_max <= 0 or n < 2:
        raise ValueError("need tau_max > 0 and at least two points")
    if spacing == "linear":
        return np.linspace(0.0, tau_max, n)
    if spacing == "log":
        return np.concatenate([[0.0], np.geomspace(tau_max * 1e-3, tau_max, n - 1)])
    raise ValueError(f"unknown spacing {spacing!r}")
