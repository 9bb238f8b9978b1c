"""Driven three-level Lambda system: parameters, states and the Bloch generator.

Basis order is ``|1> = |down>``, ``|2> = |up>``, ``|3> = |T_b>`` (trion).
Density matrices are vectorised row-major,

    rho_vec = [r11, r12, r13, r21, r22, r23, r31, r32, r33]

so slot ``3*(i-1) + (j-1)`` holds ``rho_ij``. The laser drives ``|2> <-> |3>``
on resonance; the trion decays to both ground states.

Units: rates and angular frequencies in rad/ns (1/ns), times in ns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .integrate import propagate

__all__ = [
    "InvalidParameters",
    "SystemParams",
    "DensityMatrix",
    "Liouvillian",
    "slot",
    "ghz_to_rad_per_ns",
    "rates_from_lifetimes",
    "build_liouvillian",
    "evolve",
    "quasi_steady_state",
    "quasi_steady_ratio",
    "DRIVEN_SLOTS",
]

BRANCHING_RTOL = 1e-12


class InvalidParameters(ValueError):
    """Raised for physically inconsistent system parameters."""


def slot(i: int, j: int) -> int:
    """Index of ``rho_ij`` (1-based levels) in the vectorised density matrix."""
    return 3 * (i - 1) + (j - 1)


# r22, r23, r32, r33: the driven subspace; r11 never feeds back into it.
DRIVEN_SLOTS = (slot(2, 2), slot(2, 3), slot(3, 2), slot(3, 3))


def ghz_to_rad_per_ns(f_ghz: float) -> float:
    return 2.0 * math.pi * f_ghz


def rates_from_lifetimes(t1: float, t2: float | None = None) -> tuple[float, float]:
    """Return ``(gamma, gamma3)`` from the trion lifetime and coherence time.

    ``gamma = 1/T1`` and ``gamma3 = 1/T2 - 1/(2 T1)``; ``T2`` defaults to the
    radiative limit ``2 T1``.
    """
    if t1 <= 0:
        raise InvalidParameters(f"T1 must be positive, got {t1}")
    if t2 is None:
        t2 = 2.0 * t1
    if t2 <= 0:
        raise InvalidParameters(f"T2 must be positive, got {t2}")
    if t2 > 2.0 * t1 * (1 + 1e-12):
        raise InvalidParameters(f"T2 = {t2} ns exceeds 2*T1 = {2 * t1} ns")
    gamma3 = max(1.0 / t2 - 1.0 / (2.0 * t1), 0.0)
    return 1.0 / t1, gamma3


@dataclass(frozen=True)
class SystemParams:
    """Rates and frequencies of the driven Lambda system.

    Parameters
    ----------
    omega : float
        Rabi frequency of the 2-3 drive (rad/ns).
    gamma : float
        Total spontaneous decay rate of the trion (1/ns).
    branching : tuple of float, optional
        ``(gamma31, gamma32)``; defaults to an even split of ``gamma``.
    gamma3 : float
        Pure dephasing rate of the trion (1/ns).
    omega12 : float
        Mean ground-state Zeeman splitting (rad/ns).
    t2star : float
        Inhomogeneous spin dephasing time (ns); ``math.inf`` disables it.
    """

    omega: float
    gamma: float
    branching: tuple[float, float] | None = None
    gamma3: float = 0.0
    omega12: float = 0.0
    t2star: float = math.inf

    def __post_init__(self):
        if self.branching is None:
            object.__setattr__(self, "branching", (self.gamma / 2, self.gamma / 2))
        else:
            object.__setattr__(self, "branching", tuple(float(b) for b in self.branching))
        problems = []
        for name in ("omega", "gamma", "gamma3", "omega12"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                problems.append(f"{name} must be finite and >= 0, got {value}")
        g31, g32 = self.branching
        if g31 < 0 or g32 < 0:
            problems.append(f"branching rates must be >= 0, got {self.branching}")
        if abs(g31 + g32 - self.gamma) > BRANCHING_RTOL * max(self.gamma, 1e-300):
            problems.append(f"gamma31 + gamma32 = {g31 + g32} != gamma = {self.gamma}")
        if not self.t2star > 0:
            problems.append(f"t2star must be > 0, got {self.t2star}")
        if problems:
            raise InvalidParameters("; ".join(problems))

    @classmethod
    def from_lifetimes(
        cls,
        t1: float,
        t2: float | None = None,
        *,
        omega: float,
        t2star: float = math.inf,
        zeeman_ghz: float = 0.0,
        branching_ratio: float = 0.5,
    ) -> "SystemParams":
        """Build from ``T1``/``T2`` (ns); ``branching_ratio`` is ``gamma31/gamma``."""
        gamma, gamma3 = rates_from_lifetimes(t1, t2)
        g31 = branching_ratio * gamma
        return cls(
            omega=omega,
            gamma=gamma,
            branching=(g31, gamma - g31),
            gamma3=gamma3,
            omega12=ghz_to_rad_per_ns(zeeman_ghz),
            t2star=t2star,
        )

    @property
    def gamma31(self) -> float:
        return self.branching[0]

    @property
    def gamma32(self) -> float:
        return self.branching[1]

    @property
    def xi(self) -> float:
        """Total trion coherence decay ``gamma + gamma3`` (twice the 1/T2 rate)."""
        return self.gamma + self.gamma3

    def replace(self, **changes) -> "SystemParams":
        fields = dict(
            omega=self.omega,
            gamma=self.gamma,
            branching=self.branching,
            gamma3=self.gamma3,
            omega12=self.omega12,
            t2star=self.t2star,
        )
        if "gamma" in changes and "branching" not in changes:
            ratio = self.gamma31 / self.gamma if self.gamma > 0 else 0.5
            fields["branching"] = (ratio * changes["gamma"], (1 - ratio) * changes["gamma"])
        fields.update(changes)
        return SystemParams(**fields)


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DensityMatrix:
    """Validated 3x3 density matrix."""

    rho: NDArray[np.complex128]
    atol_hermitian: float = field(default=1e-10, repr=False, compare=False)
    atol_trace: float = field(default=1e-10, repr=False, compare=False)
    atol_positive: float = field(default=1e-8, repr=False, compare=False)

    def __post_init__(self):
        rho = _frozen(self.rho)
        if rho.shape == (9,):
            rho = _frozen(rho.reshape(3, 3))
        if rho.shape != (3, 3):
            raise ValueError(f"density matrix must be 3x3, got shape {rho.shape}")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm >= self.atol_hermitian:
            raise ValueError(f"density matrix not Hermitian (max deviation {herm:.3e})")
        tr = np.trace(rho)
        if abs(tr - 1) >= self.atol_trace:
            raise ValueError(f"density matrix trace {tr:.12g} != 1")
        lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min()
        if lam <= -self.atol_positive:
            raise ValueError(f"density matrix not positive (min eigenvalue {lam:.3e})")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def pure(cls, level: int) -> "DensityMatrix":
        """Projector on basis level ``1``, ``2`` or ``3``."""
        rho = np.zeros((3, 3), complex)
        rho[level - 1, level - 1] = 1.0
        return cls(rho)

    @classmethod
    def from_ket(cls, psi: Sequence[complex]) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def vec(self) -> NDArray[np.complex128]:
        return self.rho.reshape(9).copy()

    def __getitem__(self, ij: tuple[int, int]) -> complex:
        i, j = ij
        return complex(self.rho[i - 1, j - 1])

    def expect(self, i: int, j: int) -> complex:
        """``<sigma_ij> = tr(rho |i><j|) = rho_ji``."""
        return complex(self.rho[j - 1, i - 1])


@dataclass(frozen=True)
class Liouvillian:
    """9x9 generator ``M`` with ``d rho_vec / dt = M rho_vec``."""

    m: NDArray[np.complex128]
    params: SystemParams

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen(self.m))

    def driven_block(self) -> NDArray[np.complex128]:
        idx = np.array(DRIVEN_SLOTS)
        return np.array(self.m[np.ix_(idx, idx)])


def build_liouvillian(p: SystemParams) -> Liouvillian:
    """Optical Bloch generator for the resonantly driven Lambda system.

    Derived from ``H = -(omega/2)(s32 + s23)`` plus spontaneous decay 3->1,
    3->2 and trion pure dephasing. The Zeeman splitting is not part of the
    generator (rotating frame); it enters only through the Overhauser average.
    """
    h = 0.5j * p.omega
    half_xi = 0.5 * p.xi
    m = np.zeros((9, 9), dtype=complex)
    s = slot
    m[s(1, 1), s(3, 3)] = p.gamma31
    m[s(1, 2), s(1, 3)] = -h
    m[s(1, 3), s(1, 2)] = -h
    m[s(1, 3), s(1, 3)] = -half_xi
    m[s(2, 1), s(3, 1)] = h
    m[s(2, 2), s(2, 3)] = -h
    m[s(2, 2), s(3, 2)] = h
    m[s(2, 2), s(3, 3)] = p.gamma32
    m[s(2, 3), s(2, 2)] = -h
    m[s(2, 3), s(2, 3)] = -half_xi
    m[s(2, 3), s(3, 3)] = h
    m[s(3, 1), s(2, 1)] = h
    m[s(3, 1), s(3, 1)] = -half_xi
    m[s(3, 2), s(2, 2)] = h
    m[s(3, 2), s(3, 2)] = -half_xi
    m[s(3, 2), s(3, 3)] = -h
    m[s(3, 3), s(2, 3)] = h
    m[s(3, 3), s(3, 2)] = -h
    m[s(3, 3), s(3, 3)] = -p.gamma
    return Liouvillian(m, p)


def _check_grid(t_grid) -> NDArray[np.float64]:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-D sequence")
    if t[0] != 0.0:
        raise ValueError(f"time grid must start at 0, starts at {t[0]}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def evolve(
    rho0: DensityMatrix,
    L: Liouvillian,
    t_grid,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> list[DensityMatrix]:
    """Integrate the Bloch equations and return the state at every grid time.

    Each sample is re-validated as a density matrix, so an unphysical
    trajectory raises instead of being returned.
    """
    t = _check_grid(t_grid)
    traj = propagate(L.m, rho0.vec, t, rtol=rtol, atol=atol)
    return [DensityMatrix(x) for x in traj]


def quasi_steady_state(p: SystemParams) -> tuple[DensityMatrix, complex]:
    """Slowest mode of the driven ``{|2>, |3>}`` subspace.

    Returns the mode normalised to unit trace (with ``r11 = 0``) and its
    eigenvalue, ``-gamma_SP`` for a leaking Lambda system or 0 when the
    excited state decays only back into ``|2>``.
    """
    if p.omega <= 0:
        raise InvalidParameters("quasi-steady state needs a non-zero drive")
    block = build_liouvillian(p).driven_block()
    w, v = np.linalg.eig(block)
    k = int(np.argmin(np.abs(w.real)))
    vec = v[:, k] / (v[0, k] + v[3, k])
    rho = np.zeros((3, 3), complex)
    rho[1, 1], rho[1, 2], rho[2, 1], rho[2, 2] = vec
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho), complex(w[k])


def quasi_steady_ratio(p: SystemParams) -> complex:
    """``<s23>/<s33> = rho_32/rho_33`` in the quasi-steady state."""
    state, _ = quasi_steady_state(p)
    return state[3, 2] / state[3, 3]
