"""Direction-of-arrival estimation for hybrid analog-digital receive arrays.

The package covers the narrowband ULA signal model, analog combiner
architectures, covariance reconstruction from multi-slot hybrid
measurements, MUSIC, two-stage beam scanning, pilot-aided virtual arrays
and a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

from .array_model import (ArrayGeometry, NoiseSpec, SnapshotMatrix, SourceScenario, derive_seed,
                          generate_snapshots, make_rng, steering_matrix, steering_vector, true_covariance)
from .covariance import (CovarianceMatrix, IdentifiabilityReport, ReconstructionPlan, beamspace_reconstruct,
                         block_scm, dft_plan, entrywise_reconstruct, exact_hybrids, identifiability_report,
                         psd_project, random_plan, read_matrix_csv, sample_scm, selection_plan, slot_hybrids,
                         toeplitz_reconstruct, write_matrix_csv)
from .errors import (ConfigurationError, DomainError, HadoaError, IdentifiabilityError, PeakDeficitError,
                     ScanUnderrunError)
from .experiments import ExperimentConfig, RmseCurve, pair_and_error, run_trial, sweep_array_rf, sweep_snr
from .frontend import (Combiner, DynamicSubarray, FullyConnected, PartiallyConnected, SwitchBased, apply_combiner,
                       build_combiner, effective_steering, quantize_phases, read_combiner_csv, validate,
                       write_combiner_csv)
from .music import (DoaEstimate, SpectrumGrid, estimate_doa_music, find_peaks, hermitian_eig, music_spectrum)
from .pilot import (PilotSchedule, VirtualObservation, collect_virtual_observation, matched_filter_estimate,
                    random_phase_combiner, virtual_music)
from .scan import (ScanCodebook, ScanResult, SnapshotSource, build_coarse_codebook, build_fine_codebook,
                   scan_power, two_stage_estimate)

__all__ = [
    "__version__",
    "ArrayGeometry",
    "NoiseSpec",
    "SnapshotMatrix",
    "SourceScenario",
    "derive_seed",
    "generate_snapshots",
    "make_rng",
    "steering_matrix",
    "steering_vector",
    "true_covariance",
    "CovarianceMatrix",
    "IdentifiabilityReport",
    "ReconstructionPlan",
    "beamspace_reconstruct",
    "block_scm",
    "dft_plan",
    "entrywise_reconstruct",
    "exact_hybrids",
    "identifiability_report",
    "psd_project",
    "random_plan",
    "read_matrix_csv",
    "sample_scm",
    "selection_plan",
    "slot_hybrids",
    "toeplitz_reconstruct",
    "write_matrix_csv",
    "ConfigurationError",
    "DomainError",
    "HadoaError",
    "IdentifiabilityError",
    "PeakDeficitError",
    "ScanUnderrunError",
    "ExperimentConfig",
    "RmseCurve",
    "pair_and_error",
    "run_trial",
    "sweep_array_rf",
    "sweep_snr",
    "Combiner",
    "DynamicSubarray",
    "FullyConnected",
    "PartiallyConnected",
    "SwitchBased",
    "apply_combiner",
    "build_combiner",
    "effective_steering",
    "quantize_phases",
    "read_combiner_csv",
    "validate",
    "write_combiner_csv",
    "DoaEstimate",
    "SpectrumGrid",
    "estimate_doa_music",
    "find_peaks",
    "hermitian_eig",
    "music_spectrum",
    "PilotSchedule",
    "VirtualObservation",
    "collect_virtual_observation",
    "matched_filter_estimate",
    "random_phase_combiner",
    "virtual_music",
    "ScanCodebook",
    "ScanResult",
    "SnapshotSource",
    "build_coarse_codebook",
    "build_fine_codebook",
    "scan_power",
    "two_stage_estimate",
]
