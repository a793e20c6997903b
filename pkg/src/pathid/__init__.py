"""Two-source path-identity interferometry for two-qubit mixed states.

Simulates the scheme in which a generalized Werner photon pair is emitted
coherently by two sources, the idlers are aligned (never detected), and
the entanglement of the pair is read off single-photon interference of
the signal alone, robustly against polarization-dependent idler loss.
"""

from .errors import (
    AmbiguousBranchError,
    InconsistentDataError,
    PathidError,
    ScanPlanError,
    SettingsError,
    UnderdeterminedFitError,
    UndefinedQuantityError,
    UnidentifiableError,
    ValidationError,
)
from .estimation import (
    EstimationReport,
    ExtremaEstimate,
    PhaseScanRecord,
    ScanSetting,
    build_scan_plan,
    calibrate_delta,
    estimate_b1b2,
    estimate_coh_product,
    estimate_eta_lossless,
    estimate_eta_lossy,
    estimate_eta_prob,
    estimate_from_records,
    estimate_transmissions,
    fit_fringe,
    ppt_and_concurrence,
    read_scan_csv,
    recover_icoh,
    recover_ih,
    run_pipeline,
    simulate_scan,
    write_scan_csv,
)
from .fringes import (
    FringeModel,
    combine_sinusoids,
    delta_star,
    fringe_model,
    visibility_closed,
)
from .interferometer import (
    InterferometerConfig,
    PhaseTable,
    PolarizationProjector,
    POLARIZATIONS,
    apply_alignment,
    blocked_arm_probability,
    detection_probability,
    idler_unitary,
    joint_unaligned_state,
    polarization,
    reduce_signal,
    signal_state,
)
from .states import (
    DensityMatrix,
    GeneralizedWernerParams,
    PptSpectrum,
    build_state,
    concurrence_closed,
    concurrence_wootters_numeric,
    entanglement_verdict,
    lambda_spectrum_closed,
    partial_transpose,
    ppt_spectrum_closed,
    ppt_spectrum_numeric,
    spin_flip,
)

__version__ = "0.1.0"
