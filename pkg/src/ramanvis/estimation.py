"""Least-squares extraction of T2*, saturation parameters and fringe contrast.

All fits go through :func:`levenberg_marquardt`, a small damped Gauss-Newton
solver with analytic Jacobians and Marquardt diagonal scaling. Uncertainties
come from the residual-variance-scaled covariance ``s^2 (J^T J)^-1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "FitModel",
    "FitResult",
    "FitError",
    "LMResult",
    "levenberg_marquardt",
    "GaussianDecay",
    "Saturation",
    "SinusoidFringe",
    "fit_gaussian_t2star",
    "fit_saturation",
    "fit_fringe",
]

LAMBDA_INIT = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 10.0
MAX_ITER = 200
GTOL = 1e-8


class FitError(RuntimeError):
    """Fit could not be attempted or did not converge."""


class FitModel(str, enum.Enum):
    GAUSSIAN_DECAY = "GaussianDecay"
    SATURATION = "Saturation"
    SINUSOID_FRINGE = "SinusoidFringe"


@dataclass
class LMResult:
    x: NDArray[np.float64]
    cost: float
    jac: NDArray[np.float64]
    residuals: NDArray[np.float64]
    converged: bool
    iterations: int
    grad_norm: float
    cost_history: list[float]


def _orthogonality(J, r, g) -> float:
    rn = np.linalg.norm(r)
    if rn == 0.0:
        return 0.0
    cn = np.linalg.norm(J, axis=0)
    cn = np.where(cn > 0, cn, 1.0)
    return float(np.max(np.abs(g) / (cn * rn)))


def levenberg_marquardt(
    residual: Callable[[NDArray], NDArray],
    jacobian: Callable[[NDArray], NDArray],
    x0: Sequence[float],
    *,
    lam0: float = LAMBDA_INIT,
    max_iter: int = MAX_ITER,
    gtol: float = GTOL,
) -> LMResult:
    """Minimise ``0.5 * |residual(x)|^2``.

    The step solves ``(J^T J + lam diag(J^T J)) dx = -J^T r``. Accepted steps
    divide ``lam`` by 10, rejected steps multiply it by 10. Convergence means
    the gradient test below; a stalled run (no further decrease possible)
    is accepted when the gradient test holds to ``sqrt(gtol)`` or the residual
    has dropped to roundoff (exact data).

    The gradient test is scale free (the MINPACK ``gtol`` form): the largest
    cosine between the residual vector and a Jacobian column must fall below
    ``gtol``. An absolute ``|J^T r|`` threshold breaks when the data carry
    large counts.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    cost = 0.5 * float(r @ r)
    cost0 = cost
    history = [cost]
    lam = lam0
    it = 0
    stalled = False
    J = jacobian(x)
    g = J.T @ r
    while it < max_iter:
        if _orthogonality(J, r, g) < gtol:
            break
        it += 1
        A = J.T @ J
        scale = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= LAMBDA_UP
                continue
            x_new = x + step
            r_new = residual(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= LAMBDA_UP
        if not accepted:
            stalled = True
            break
        small = np.linalg.norm(step) <= 1e-15 * (np.linalg.norm(x) + 1e-15)
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / LAMBDA_DOWN, 1e-15)
        J = jacobian(x)
        g = J.T @ r
        if small:
            stalled = True
            break
    grad_norm = float(np.linalg.norm(g))
    orth = _orthogonality(J, r, g)
    # a stall is a minimum to working precision; roundoff keeps orth above
    # gtol there, and on zero-residual data the cosine is pure noise
    exact = cost <= 1e-24 * max(cost0, 1e-300) or cost == 0.0
    converged = orth < gtol or (stalled and (orth < math.sqrt(gtol) or exact))
    return LMResult(
        x=x,
        cost=cost,
        jac=J,
        residuals=r,
        converged=converged,
        iterations=it,
        grad_norm=grad_norm,
        cost_history=history,
    )


@dataclass
class FitResult:
    """Outcome of one model fit.

    ``params`` and ``uncertainties`` are keyed by parameter name; the
    covariance rows follow the same order.
    """

    model: FitModel
    params: dict[str, float]
    uncertainties: dict[str, float]
    covariance: NDArray[np.float64]
    residual_rms: float
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "params": dict(self.params),
            "uncertainties": dict(self.uncertainties),
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "iterations": self.iterations,
            "diagnostics": self.diagnostics,
        }


class GaussianDecay:
    """``A exp(-(tau/T)^2)``."""

    names = ("amplitude", "t2star")

    @staticmethod
    def __call__(tau, params):
        a, t = params
        return a * np.exp(-((np.asarray(tau) / t) ** 2))

    @staticmethod
    def jacobian(tau, params):
        a, t = params
        tau = np.asarray(tau, dtype=float)
        e = np.exp(-((tau / t) ** 2))
        return np.column_stack([e, a * e * 2.0 * tau**2 / t**3])


class Saturation:
    """``0.5 k P gamma / (gamma^2 + 2 k P)`` with ``omega^2 = k P``."""

    names = ("gamma", "k")

    @staticmethod
    def __call__(power, params):
        g, k = params
        power = np.asarray(power, dtype=float)
        return 0.5 * k * power * g / (g**2 + 2.0 * k * power)

    @staticmethod
    def jacobian(power, params):
        g, k = params
        power = np.asarray(power, dtype=float)
        d = g**2 + 2.0 * k * power
        d_g = 0.5 * k * power * (2.0 * k * power - g**2) / d**2
        d_k = 0.5 * power * g**3 / d**2
        return np.column_stack([d_g, d_k])


class SinusoidFringe:
    """``N0 (1 + V cos(theta - theta0))``."""

    names = ("n0", "visibility", "theta0")

    @staticmethod
    def __call__(theta, params):
        n0, v, th0 = params
        return n0 * (1.0 + v * np.cos(np.asarray(theta) - th0))

    @staticmethod
    def jacobian(theta, params):
        n0, v, th0 = params
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta - th0), np.sin(theta - th0)
        return np.column_stack([1.0 + v * c, n0 * c, n0 * v * s])


def _covariance(lm: LMResult, n_data: int) -> NDArray[np.float64]:
    n_par = lm.x.size
    dof = max(n_data - n_par, 1)
    s2 = 2.0 * lm.cost / dof
    cov = s2 * np.linalg.pinv(lm.jac.T @ lm.jac)
    return 0.5 * (cov + cov.T)


def _run(model, x, y, p0, sigma=None) -> tuple[LMResult, NDArray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    lm = levenberg_marquardt(
        lambda q: w * (model(x, q) - y),
        lambda q: w[:, None] * model.jacobian(x, q),
        p0,
    )
    return lm, _covariance(lm, y.size)


def _result(model_id, model, lm, cov, n_data, diagnostics) -> FitResult:
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    diagnostics = dict(diagnostics)
    diagnostics.setdefault("grad_norm", lm.grad_norm)
    diagnostics.setdefault("cost", lm.cost)
    return FitResult(
        model=model_id,
        params={k: float(v) for k, v in zip(model.names, lm.x)},
        uncertainties={k: float(v) for k, v in zip(model.names, errs)},
        covariance=cov,
        residual_rms=float(math.sqrt(2.0 * lm.cost / n_data)),
        converged=lm.converged,
        iterations=lm.iterations,
        diagnostics=diagnostics,
    )


def _e_fold_time(tau, v, amplitude) -> float:
    target = amplitude / math.e
    below = np.nonzero(v <= target)[0]
    if below.size == 0 or below[0] == 0:
        # extrapolate from the last sample assuming Gaussian shape
        ratio = v[-1] / amplitude
        return float(tau[-1] / math.sqrt(-math.log(ratio))) if 0 < ratio < 1 else float(tau[-1])
    k = below[0]
    t0, t1, v0, v1 = tau[k - 1], tau[k], v[k - 1], v[k]
    return float(t0 + (v0 - target) * (t1 - t0) / (v0 - v1))


def fit_gaussian_t2star(curve=None, *, tau=None, visibility=None, valid=None) -> FitResult:
    """Fit ``A exp(-(tau/T2*)^2)`` to a visibility-ratio curve.

    Pass either a :class:`~ramanvis.visibility.VisibilityCurve` or ``tau`` and
    ``visibility`` arrays. Invalid or non-finite samples are dropped. The
    amplitude floats; ``diagnostics['t2star_fixed_amplitude']`` holds the fit
    with ``A = 1``.
    """
    if curve is not None:
        tau, visibility, valid = curve.tau, curve.visibility, curve.valid
    tau = np.asarray(tau, dtype=float)
    v = np.asarray(visibility, dtype=float)
    keep = np.isfinite(v) & np.isfinite(tau)
    if valid is not None:
        keep &= np.asarray(valid, dtype=bool)
    tau, v = tau[keep], v[keep]
    if tau.size < 5:
        raise FitError(f"need at least 5 valid samples, got {tau.size}")
    if np.ptp(v) <= 1e-12 * max(np.max(np.abs(v)), 1.0):
        raise FitError("degenerate data: all visibilities are equal")
    a0 = float(np.max(v))
    if a0 <= 0:
        raise FitError("degenerate data: no positive visibility")
    if np.min(v) > a0 * math.exp(-0.64):
        raise FitError("data do not decay far enough to constrain T2* (need V < A exp(-0.64))")
    t0 = _e_fold_time(tau, v, a0)

    model = GaussianDecay()
    lm, cov = _run(model, tau, v, [a0, t0])
    if not lm.converged:
        raise FitError(f"Gaussian fit did not converge after {lm.iterations} iterations")
    lm.x[1] = abs(lm.x[1])

    # A fixed at 1: one-parameter fit in T only
    fixed = levenberg_marquardt(
        lambda q: model(tau, [1.0, q[0]]) - v,
        lambda q: model.jacobian(tau, [1.0, q[0]])[:, 1:],
        [lm.x[1]],
    )
    diag = {
        "t2star_fixed_amplitude": float(abs(fixed.x[0])),
        "fixed_amplitude_converged": fixed.converged,
        "n_samples": int(tau.size),
        "cost_history": lm.cost_history,
    }
    return _result(FitModel.GAUSSIAN_DECAY, model, lm, cov, tau.size, diag)


def fit_saturation(powers, rates) -> FitResult:
    """Fit the spin-pumping saturation curve to (power, rate) pairs.

    ``powers`` are in any unit proportional to the drive power (``omega^2 =
    k P``). Returns ``gamma`` and ``k``; ``diagnostics['p_sat']`` is the power
    at which ``2 omega^2 = gamma^2``, i.e. ``gamma^2 / (2 k)``.
    """
    powers = np.asarray(powers, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if powers.shape != rates.shape:
        raise ValueError("powers and rates must have equal length")
    if np.unique(powers).size < 4:
        raise FitError("need at least 4 distinct powers")
    if np.any(powers < 0) or np.any(rates < 0):
        raise FitError("powers and rates must be non-negative")

    model = Saturation()
    # coarse log grid for a start value; the cost surface is narrow along k
    r_max = float(np.max(rates))
    gammas = np.geomspace(max(r_max, 1e-12), 1e3 * max(r_max, 1e-12), 61)
    p_ref = float(np.max(powers))
    best = None
    for g in gammas:
        for frac in np.geomspace(1e-3, 1e3, 61):
            k = frac * g**2 / p_ref
            c = float(np.sum((model(powers, [g, k]) - rates) ** 2))
            if best is None or c < best[0]:
                best = (c, g, k)
    lm, cov = _run(model, powers, rates, [best[1], best[2]])
    if not lm.converged:
        raise FitError(f"saturation fit did not converge after {lm.iterations} iterations")
    g, k = lm.x
    drive_reach = 2.0 * k * p_ref / g**2
    diag = {
        "p_sat": float(g**2 / (2.0 * k)),
        "saturation_reached": float(drive_reach),
        # all powers far below saturation: gamma and k are degenerate
        "weakly_identifiable": bool(drive_reach < 0.1),
        "cost_history": lm.cost_history,
    }
    return _result(FitModel.SATURATION, model, lm, cov, powers.size, diag)


def fit_fringe(phases, counts, *, reweight: int = 3) -> FitResult:
    """Fit ``N0 (1 + V cos(theta - theta0))`` to counts at scanned phases.

    Poisson weighting uses the model variance ``max(N(theta), 1)`` from the
    previous pass, starting from an unweighted fit. ``V`` is reported in
    ``[0, inf)`` with ``theta0`` wrapped into ``(-pi, pi]``;
    ``diagnostics['visibility_above_one']`` flags ``V > 1 + 3 sigma``.
    """
    theta = np.asarray(phases, dtype=float)
    n = np.asarray(counts, dtype=float)
    if theta.shape != n.shape:
        raise ValueError("phases and counts must have equal length")
    if theta.size < 6:
        raise FitError(f"need at least 6 phase points, got {theta.size}")
    if np.ptp(theta) < 1.5 * math.pi:
        raise FitError("phase scan must cover at least 1.5 pi")
    if np.any(n < 0):
        raise FitError("counts must be non-negative")

    # linear start: n = c0 + a cos + b sin
    design = np.column_stack([np.ones_like(theta), np.cos(theta), np.sin(theta)])
    (c0, a, b), *_ = np.linalg.lstsq(design, n, rcond=None)
    if c0 <= 0:
        raise FitError("no counts to fit")
    p0 = [c0, math.hypot(a, b) / c0, math.atan2(b, a)]

    model = SinusoidFringe()
    lm, cov = _run(model, theta, n, p0)
    for _ in range(reweight):
        sigma = np.sqrt(np.maximum(model(theta, lm.x), 1.0))
        lm, cov = _run(model, theta, n, lm.x, sigma=sigma)
    if not lm.converged:
        raise FitError(f"fringe fit did not converge after {lm.iterations} iterations")

    n0, v, th0 = lm.x
    if v < 0:
        v, th0 = -v, th0 + math.pi
        flip = np.diag([1.0, -1.0, 1.0])
        cov = flip @ cov @ flip
    th0 = math.atan2(math.sin(th0), math.cos(th0))
    lm.x = np.array([n0, v, th0])
    v_err = math.sqrt(max(cov[1, 1], 0.0))
    diag = {
        "visibility_above_one": bool(v > 1.0 + 3.0 * v_err),
        "chi2_per_dof": float(2.0 * lm.cost / max(theta.size - 3, 1)),
        "cost_history": lm.cost_history,
    }
    return _result(FitModel.SINUSOID_FRINGE, model, lm, cov, theta.size, diag)
