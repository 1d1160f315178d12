"""Spiral-bandwidth OAM quantum-memory simulator.

Mode-coupling amplitudes for four-wave mixing over Laguerre-Gaussian modes,
spiral spectra, coincidence-count simulation, state tomography and the
entanglement figures of merit built on top of them.
"""
from ._kernels import BACKEND
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    EmptySubspaceError,
    RangeError,
    SingularityError,
    SpiralBWError,
    UndefinedError,
)
from .fitting import FitResult, exponential_decay, fit_exponential, fit_lorentzian, lorentzian, minimize
from .fwm import (
    Chi3Params,
    FwmConfig,
    PumpConvention,
    SpiralSpectrum,
    chi3,
    coupling_amplitude,
    radial_overlap,
    spiral_spectrum,
    two_photon_state,
)
from .lg_modes import AnnularComposite, LGMode, default_ring_pair, evaluate, mode_norm, radial_profile
from .measurement import (
    CALIBRATED_DURATION_S,
    CALIBRATED_NOISE,
    ZERO_NOISE,
    CoincidenceRecord,
    DecayModel,
    NoiseModel,
    Projector,
    analyzer_projector,
    basis_projectors,
    coincidence_probability,
    multiplex_coincidences,
    ring_multiplex_coincidences,
    sample_counts,
    tomography_basis,
)
from .metrics import (
    ChshSettings,
    SubspaceVisibilities,
    WitnessReport,
    chsh_S,
    contrast,
    correlation_E,
    visibility,
    witness_bound,
    witness_W,
)
from .qstate import DensityMatrix, StateVector, fidelity, post_select, pure_density, uhlmann_fidelity
from .tomography import MleResult, TomographyRun, linear_reconstruct, mc_uncertainty, mle_reconstruct, simulate_run

__version__ = "0.1.0"
