"""Coherence of Rayleigh and spin-flip Raman photons from a driven Lambda system.

Simulates the first-order correlation of both scattering channels with the
quantum regression theorem, predicts Mach-Zehnder visibilities under
Overhauser-field dephasing, and extracts the spin dephasing time ``T2*``.
"""

from .core import (
    DensityMatrix,
    InvalidParameters,
    Liouvillian,
    SystemParams,
    build_liouvillian,
    evolve,
    quasi_steady_ratio,
    quasi_steady_state,
)
from .qrt import Channel, CorrelationTrace, ValidityWarning, g1, qrt_initial_vector, tau_grid
from .spectral import (
    RateSpectrum,
    decay_rates,
    gamma_sp_closed_form,
    gamma_sp_spectral,
    power_to_rabi,
)
from .visibility import (
    OverhauserDistribution,
    VisibilityCurve,
    v_blue,
    v_diag1,
    visibility_ratio,
)

__version__ = "0.1.0"
