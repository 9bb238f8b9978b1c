"""Mach-Zehnder fringe visibilities of Rayleigh and spin-flip Raman photons.

The unbalanced interferometer compares the field at ``t`` with the field at
``t + tau``. A neutral-density filter in the short arm equalises the two
amplitudes while the source empties at the spin-pumping rate, which turns the
fringe visibility into ``exp(gamma_SP tau / 2) |g1(tau)|``.

The Raman photon additionally carries the ground-state (Larmor) phase. The
slowly fluctuating Overhauser field makes the Larmor frequency Gaussian
distributed, so the Raman fringe is the modulus of the phase-averaged
correlator; its mean frequency is common-mode and drops out, only the
deviation ``delta_omega`` enters.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.typing import NDArray

from .core import SystemParams
from .qrt import Channel, g1
from .spectral import gamma_sp_spectral

__all__ = [
    "VisibilityChannel",
    "VisibilityCurve",
    "OverhauserDistribution",
    "QuadratureError",
    "ELECTRON_ZEEMAN_GHZ",
    "HOLE_ZEEMAN_GHZ",
    "interference_visibility",
    "normalize_by_laser",
    "v_blue",
    "v_diag1",
    "visibility_ratio",
    "gaussian_decay",
    "visibility_table",
]

ELECTRON_ZEEMAN_GHZ = 22.0
HOLE_ZEEMAN_GHZ = 8.0

OVERSHOOT_TOL = 1e-6
RATIO_GUARD = 1e-6
QUADRATURE_TOL = 1e-8
# hermgauss weights underflow beyond ~400 nodes
MAX_QUADRATURE_ORDER = 256


class QuadratureError(RuntimeError):
    """Gauss-Hermite average not converged under order doubling."""


class VisibilityChannel(str, enum.Enum):
    BLUE = "blue"
    DIAG1 = "diag1"
    RATIO = "ratio"


@dataclass(frozen=True)
class VisibilityCurve:
    """Visibility against interferometer delay.

    ``valid`` is False where a sample was clamped (compensated visibility
    overshooting 1) or where a ratio denominator was too small.
    """

    channel: VisibilityChannel
    tau: NDArray[np.float64]
    visibility: NDArray[np.float64]
    params_used: SystemParams
    valid: NDArray[np.bool_] = field(default=None)

    def __post_init__(self):
        if self.valid is None:
            object.__setattr__(self, "valid", np.ones(len(self.tau), dtype=bool))


@dataclass(frozen=True)
class OverhauserDistribution:
    """Normal distribution of Larmor frequencies, ``sigma = sqrt(2)/T2*``."""

    mean: float
    sigma: float
    order: int = 64

    @classmethod
    def from_params(cls, p: SystemParams, order: int = 64) -> "OverhauserDistribution":
        sigma = 0.0 if math.isinf(p.t2star) else math.sqrt(2.0) / p.t2star
        return cls(mean=p.omega12, sigma=sigma, order=order)

    def nodes(self, order: int | None = None) -> tuple[NDArray, NDArray]:
        """Deviations ``delta_omega`` from the mean and probability weights."""
        x, w = hermgauss(order or self.order)
        return math.sqrt(2.0) * self.sigma * x, w / math.sqrt(math.pi)

    def characteristic(self, tau) -> NDArray[np.float64]:
        """Analytic ``E[exp(i delta_omega tau)] = exp(-sigma^2 tau^2 / 2)``."""
        tau = np.asarray(tau, dtype=float)
        return np.exp(-0.5 * (self.sigma * tau) ** 2)

    def phase_average(
        self,
        tau,
        correlator: Callable[[NDArray, NDArray], NDArray] | None = None,
        order: int | None = None,
    ) -> NDArray[np.complex128]:
        """Average ``c(tau, delta_omega) exp(i delta_omega tau)`` over the distribution.

        ``correlator(tau, delta_omega)`` broadcasts over a ``(n_tau, n_nodes)``
        grid; ``None`` means a frequency-independent unit correlator.
        """
        tau = np.asarray(tau, dtype=float)
        d, w = self.nodes(order)
        phase = np.exp(1j * tau[:, None] * d[None, :])
        if correlator is not None:
            phase = phase * correlator(tau[:, None], d[None, :])
        return phase @ w

    def converged_average(self, tau, correlator=None) -> NDArray[np.complex128]:
        """``phase_average`` raised in order until doubling changes it by < tol.

        A frequency-independent correlator takes the analytic characteristic
        function; quadrature cannot follow ``sigma tau`` much beyond ``sqrt(order)``.
        """
        tau = np.asarray(tau, dtype=float)
        if self.sigma == 0.0 or correlator is None:
            return self.characteristic(tau).astype(complex)
        order = self.order
        base = self.phase_average(tau, correlator, order)
        while True:
            fine = self.phase_average(tau, correlator, 2 * order)
            err = np.max(np.abs(fine - base)) if base.size else 0.0
            if err <= QUADRATURE_TOL:
                return base
            if 2 * order >= MAX_QUADRATURE_ORDER:
                raise QuadratureError(
                    f"Gauss-Hermite order {order} not converged (change {err:.2e} on doubling)"
                )
            order, base = 2 * order, fine


def interference_visibility(g1_abs, intensity_t, intensity_t_tau, alpha):
    """Fringe contrast of two fields with attenuation ``alpha`` on the early one.

    ``2 alpha |G1| / (alpha^2 I(t) + I(t + tau))`` with ``G1`` unnormalised.
    """
    g1_abs = np.asarray(g1_abs, dtype=float)
    return 2.0 * alpha * g1_abs / (alpha**2 * intensity_t + intensity_t_tau)


def normalize_by_laser(curve: VisibilityCurve, laser_visibility: float = 1.0) -> VisibilityCurve:
    """Divide out the excitation laser's own fringe visibility.

    An ideal monochromatic laser has visibility 1, making this the identity in
    simulation; measured data passes the laser visibility here.
    """
    if not 0 < laser_visibility <= 1:
        raise ValueError(f"laser visibility must lie in (0, 1], got {laser_visibility}")
    return VisibilityCurve(
        curve.channel, curve.tau, curve.visibility / laser_visibility, curve.params_used, curve.valid
    )


def _compensate(tau, amplitude, gamma_sp) -> tuple[NDArray, NDArray]:
    v = np.exp(0.5 * gamma_sp * tau) * amplitude
    overshoot = v > 1.0 + OVERSHOOT_TOL
    return np.minimum(v, 1.0), ~overshoot


def v_blue(p: SystemParams, taus) -> VisibilityCurve:
    """Rayleigh visibility ``exp(gamma_SP tau / 2) |g1_Rayleigh(tau)|``."""
    trace = g1(Channel.RAYLEIGH, p, taus)
    v, ok = _compensate(trace.tau, np.abs(trace.g1), gamma_sp_spectral(p))
    return VisibilityCurve(VisibilityChannel.BLUE, trace.tau, v, p, ok)


def v_diag1(
    p: SystemParams,
    taus,
    *,
    order: int = 64,
    correlator_phase: Callable[[NDArray, NDArray], NDArray] | None = None,
) -> VisibilityCurve:
    """Raman visibility averaged over the Overhauser distribution.

    ``correlator_phase(tau, delta_omega)`` optionally multiplies the Raman
    correlator with a frequency-dependent factor; the generator itself does
    not depend on the Zeeman splitting, so by default it is 1 and the average
    reduces to ``|g1_Raman| exp(-(tau/T2*)^2)``.
    """
    trace = g1(Channel.RAMAN, p, taus)
    dist = OverhauserDistribution.from_params(p, order=order)
    avg = dist.converged_average(trace.tau, correlator_phase)
    amplitude = np.abs(trace.g1 * avg)
    v, ok = _compensate(trace.tau, amplitude, gamma_sp_spectral(p))
    return VisibilityCurve(VisibilityChannel.DIAG1, trace.tau, v, p, ok)


def _ratio(diag: VisibilityCurve, blue: VisibilityCurve) -> VisibilityCurve:
    if not np.array_equal(diag.tau, blue.tau):
        raise ValueError("visibility curves must share one delay grid")
    ok = (blue.visibility >= RATIO_GUARD) & diag.valid & blue.valid
    ratio = np.full(blue.visibility.shape, np.nan)
    np.divide(diag.visibility, blue.visibility, out=ratio, where=blue.visibility >= RATIO_GUARD)
    return VisibilityCurve(VisibilityChannel.RATIO, blue.tau, ratio, blue.params_used, ok)


def visibility_ratio(p: SystemParams, taus) -> VisibilityCurve:
    """``V_diag1 / V_blue``; tends to ``exp(-(tau/T2*)^2)`` at weak drive."""
    return _ratio(v_diag1(p, taus), v_blue(p, taus))


def gaussian_decay(tau, t2star: float, amplitude: float = 1.0) -> NDArray[np.float64]:
    tau = np.asarray(tau, dtype=float)
    if math.isinf(t2star):
        return np.full(tau.shape, amplitude)
    return amplitude * np.exp(-((tau / t2star) ** 2))


def visibility_table(p: SystemParams, taus) -> dict[str, NDArray]:
    """All plot columns for one parameter set."""
    blue = v_blue(p, taus)
    diag = v_diag1(p, taus)
    ratio = _ratio(diag, blue)
    return {
        "tau_ns": blue.tau,
        "v_blue": blue.visibility,
        "v_diag1": diag.visibility,
        "ratio": ratio.visibility,
        "model_gaussian": gaussian_decay(blue.tau, p.t2star),
    }
