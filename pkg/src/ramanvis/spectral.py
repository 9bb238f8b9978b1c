"""Decay-rate spectrum of the Bloch generator and the spin-pumping rate.

The spectrum is obtained from a dense eigen-decomposition and labelled against
the closed-form characteristic roots ``s1 .. s9``. Exact roots:

* ``s1 = 0`` (steady state, everything pumped into ``|1>``)
* ``s5 = -(gamma + gamma3)/2`` (symmetric coherence ``r23 + r32``)
* ``s6..s9 = -xi/4 +- sqrt(xi^2/16 - omega^2/4)``, each twice (the
  ``r12/r13`` and ``r21/r31`` blocks)

Approximate roots: ``s2 ~ -gamma_SP`` and ``s3,4 ~ -(5/8) gamma +- i omega``
(strong drive only).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

from .core import SystemParams, build_liouvillian

__all__ = [
    "RateSpectrum",
    "EXACT_LABELS",
    "decay_rates",
    "closed_form_roots",
    "gamma_sp_spectral",
    "gamma_sp_closed_form",
    "power_to_rabi",
    "rabi_to_power",
    "char_det",
    "refine_root",
]

ZERO_TOL = 1e-9
ROOT_LABELS = ("s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9")
EXACT_LABELS = ("s1", "s5", "s6", "s7", "s8", "s9")


def gamma_sp_closed_form(omega: float, gamma: float) -> float:
    """Spin-pumping rate ``0.5 omega^2 gamma / (gamma^2 + 2 omega^2)``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 0.5 * omega**2 * gamma / (gamma**2 + 2.0 * omega**2)


def power_to_rabi(p_over_psat: float, gamma: float) -> float:
    """Rabi frequency for a drive power given in units of the saturation power.

    Saturation is where the spin-pumping rate reaches half its ceiling,
    ``2 omega^2 = gamma^2``; then ``omega = gamma * sqrt(P / (2 P_sat))`` and the
    coherently scattered fraction of a two-level emitter is ``1/(1 + P/P_sat)``.
    """
    if p_over_psat < 0:
        raise ValueError(f"power must be >= 0, got {p_over_psat}")
    return gamma * math.sqrt(0.5 * p_over_psat)


def rabi_to_power(omega: float, gamma: float) -> float:
    return 2.0 * (omega / gamma) ** 2


def closed_form_roots(p: SystemParams) -> dict[str, complex]:
    """Closed-form labels for the nine characteristic roots.

    ``s2`` uses the closed-form spin-pumping rate and ``s3,4`` the strong-drive
    asymptote; both are approximations.
    """
    q = p.xi / 4.0
    disc = cmath.sqrt(q * q - p.omega**2 / 4.0)
    return {
        "s1": 0j,
        "s2": complex(-gamma_sp_closed_form(p.omega, p.gamma)) if p.gamma > 0 else 0j,
        "s3": complex(-0.625 * p.gamma, p.omega),
        "s4": complex(-0.625 * p.gamma, -p.omega),
        "s5": complex(-p.xi / 2.0),
        "s6": -q + disc,
        "s7": -q + disc,
        "s8": -q - disc,
        "s9": -q - disc,
    }


def gamma_sp_spectral(p: SystemParams) -> float:
    """Spin-pumping rate from the slowest mode of the driven subspace.

    ``r11`` never feeds back into ``{r22, r23, r32, r33}``, so the eigenvalues
    of that 4x4 block are eigenvalues of the full generator; the one closest to
    zero is the leak rate of the driven ground state.
    """
    if p.omega == 0 or p.gamma31 == 0:
        return 0.0
    w = np.linalg.eigvals(build_liouvillian(p).driven_block())
    return float(-w[np.argmin(np.abs(w.real))].real)


@dataclass(frozen=True)
class RateSpectrum:
    """Eigenvalues of the generator with closed-form labels.

    Attributes
    ----------
    roots : ndarray
        The nine numerical eigenvalues (1/ns), sorted by decreasing real part.
    gamma_sp : float
        Spin-pumping rate (1/ns).
    labeled : dict
        ``label -> (numerical root, closed-form value)``.
    """

    roots: NDArray[np.complex128]
    gamma_sp: float
    labeled: dict[str, tuple[complex, complex]]

    def numeric(self, label: str) -> complex:
        return self.labeled[label][0]

    def closed(self, label: str) -> complex:
        return self.labeled[label][1]

    def table(self) -> list[dict]:
        rows = []
        for label in ROOT_LABELS:
            num, cf = self.labeled[label]
            rows.append(
                {
                    "label": label,
                    "re_numeric": num.real,
                    "im_numeric": num.imag,
                    "re_closed_form": cf.real,
                    "im_closed_form": cf.imag,
                    "abs_diff": abs(num - cf),
                    "exact": label in EXACT_LABELS,
                }
            )
        return rows


def _assign(roots: NDArray, closed: dict[str, complex]) -> dict[str, tuple[complex, complex]]:
    # exact labels first; the approximate ones take whatever is left
    labeled: dict[str, tuple[complex, complex]] = {}
    free = list(range(len(roots)))
    for group in (EXACT_LABELS, tuple(k for k in ROOT_LABELS if k not in EXACT_LABELS)):
        cf = np.array([closed[k] for k in group])
        cost = np.abs(roots[free][:, None] - cf[None, :])
        # ties between conjugates go to the root with the larger real part
        cost = cost + 1e-12 * np.arange(len(free))[:, None]
        rows, cols = linear_sum_assignment(cost)
        taken = []
        for r, c in zip(rows, cols):
            labeled[group[c]] = (complex(roots[free[r]]), complex(cf[c]))
            taken.append(free[r])
        free = [i for i in free if i not in taken]
    return {k: labeled[k] for k in ROOT_LABELS}


def decay_rates(p: SystemParams) -> RateSpectrum:
    """Eigenvalues of the Bloch generator, labelled against ``s1 .. s9``."""
    m = build_liouvillian(p).m
    try:
        roots = scipy.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigenvalue solver did not converge: {exc}") from exc
    order = np.lexsort((-roots.imag, -roots.real))
    roots = roots[order]
    # snap the conjugate-symmetry noise of real eigenvalues
    roots = np.where(np.abs(roots.imag) < 1e-13, roots.real + 0j, roots)
    return RateSpectrum(
        roots=roots,
        gamma_sp=gamma_sp_spectral(p),
        labeled=_assign(roots, closed_form_roots(p)),
    )


def char_det(m: NDArray, s: complex) -> complex:
    """``det(s I - m)`` from an LU factorisation."""
    a = s * np.eye(m.shape[0]) - m
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    sign = (-1) ** int(np.sum(piv != np.arange(len(piv))))
    return complex(sign * np.prod(np.diag(lu)))


def refine_root(m: NDArray, s0: complex, *, tol: float = 1e-13, max_iter: int = 200) -> complex:
    """Newton iteration on ``det(s I - m) = 0`` seeded at ``s0``.

    Uses ``det'/det = tr((s I - m)^-1)``, so each step needs one LU solve.
    Double roots converge linearly, which is still fast at this size.
    """
    n = m.shape[0]
    s = complex(s0)
    eye = np.eye(n)
    for _ in range(max_iter):
        a = s * eye - m
        try:
            with warnings.catch_warnings():
                # an exact hit makes the factor singular; that is the answer
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(a, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return s
        if np.min(np.abs(np.diag(lu[0]))) == 0.0:
            return s
        trace_inv = np.trace(scipy.linalg.lu_solve(lu, eye))
        if trace_inv == 0:
            return s
        step = 1.0 / trace_inv
        s -= step
        if abs(step) <= tol * max(1.0, abs(s)):
            break
    return s
