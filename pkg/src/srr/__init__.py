"""Super-resolved recovery of continuous time-frequency shifts from random probing."""

from srr.certificate import (
    CertCoeffs,
    Certificate,
    CertReport,
    DbarBounds,
    FejerSq,
    InterpSystem,
    build_certificate,
    build_interp_system,
    dbar_bounds,
    fejer_sq_coeffs,
    g_random,
    gbar,
    solve_cert_coeffs,
    validate_certificate,
)
from srr.errors import CapacityError, ConfigError, NumericalError
from srr.gridsolve import (
    DebiasResult,
    GridEstimate,
    SolverOptions,
    debias,
    extract_targets,
    resolution_error,
    solve_bp,
    solve_bpdn,
)
from srr.ops import (
    Atom,
    GridSpec,
    ProbingSignal,
    TFShift,
    TrigPoly2D,
    atom,
    dict_adjoint,
    dict_apply,
    dirichlet,
    dirichlet_trunc,
    eval_trigpoly_grid,
    freq_shift,
    gabor_adjoint,
    gabor_apply,
    isdft,
    sdft,
    time_shift,
)
from srr.rng import derive_seed, make_rng
from srr.scene import (
    DecayStudy,
    NoiseSpec,
    SampleVec,
    TargetScene,
    add_noise,
    draw_probing_signal,
    draw_scene,
    matched_filter,
    min_separation,
    model_error_decay_study,
    synthesize_periodic,
    synthesize_truncated,
)
from srr.sdp import (
    ConicSolution,
    DualPoly,
    FeasibilityReport,
    SdpOptions,
    SdpProblem,
    build_sdp,
    build_sdp_noisy,
    dual_poly,
    locate_shifts,
    solve_sdp,
    verify_dual_feasibility,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "CapacityError",
    "ConfigError",
    "ConicSolution",
    "DebiasResult",
    "DecayStudy",
    "DualPoly",
    "FeasibilityReport",
    "GridEstimate",
    "GridSpec",
    "NoiseSpec",
    "NumericalError",
    "ProbingSignal",
    "SampleVec",
    "SdpOptions",
    "SdpProblem",
    "SolverOptions",
    "TFShift",
    "TargetScene",
    "TrigPoly2D",
    "add_noise",
    "atom",
    "build_sdp",
    "build_sdp_noisy",
    "debias",
    "derive_seed",
    "dict_adjoint",
    "dict_apply",
    "dirichlet",
    "dirichlet_trunc",
    "draw_probing_signal",
    "draw_scene",
    "dual_poly",
    "eval_trigpoly_grid",
    "extract_targets",
    "freq_shift",
    "gabor_adjoint",
    "gabor_apply",
    "isdft",
    "locate_shifts",
    "make_rng",
    "matched_filter",
    "min_separation",
    "model_error_decay_study",
    "resolution_error",
    "sdft",
    "solve_bp",
    "solve_bpdn",
    "solve_sdp",
    "synthesize_periodic",
    "synthesize_truncated",
    "time_shift",
    "verify_dual_feasibility",
    "__version__",
]
