"""Non-classical cavity light as a Mach-Zehnder probe.

Modules
-------
fock            truncated Fock-space states and the ``Jy`` rotation
preparation     conditional cat-state preparation, cavity loss, extraction
interferometer  MZI propagation, counting statistics, detector blur
fisher          quantum and classical Fisher information
wigner          Wigner maps and their overlap diagnostics
estimation      Monte-Carlo maximum-likelihood phase estimation
sweep           figure-data sweeps with manifests
"""
__version__ = "0.1.0"

from .exceptions import (CavityMZIError, DimensionError, EmptyPostSelectionError,  # noqa: E402
                         ImpossibleOutcomeError, IntegrationError, NonPhysicalStateError,
                         NoPreferredDirectionError, SpecError, TruncationWarning)
from .fock import (DensityMatrix, FockVector, ModeCutoff, coherent_state,  # noqa: E402
                   default_cutoff, fidelity, number_state, partial_trace, tensor_product,
                   truncation_tail_mass, vacuum)
from .lindblad import IntegratorConfig  # noqa: E402
from .preparation import (ExtractionParams, PrepParams, PreparedState, cat_reference,  # noqa: E402
                          extract_mode, extraction_series, prepare_ideal, prepare_lossy)
from .interferometer import (InterferometerInput, OutputDistribution, blur_distribution,  # noqa: E402
                             fixed_total_slice, mzi_transform, output_distribution, polar_slice)
from .fisher import (FisherReport, cfi, fisher_report, optimize_phase_beta, qfi,  # noqa: E402
                     qfi_approx, qfi_mixed, qfi_pure)
from .wigner import PhaseGrid, WignerMap, gradient_direction, wigner, wigner_overlap  # noqa: E402
from .estimation import (EstimationConfig, EstimateReport,  # noqa: E402
                         MaximumLikelihoodPhaseEstimator, ml_estimate, run_trials, sample_counts)
