"""Balanced truncation for descriptor systems with quadratic outputs."""

from .bench import (
    BenchmarkConfig,
    MsdParams,
    gen_illustrative,
    gen_msd,
    gen_random_wcf,
    gen_stokes,
)
from .bound import CrossGramians, ErrorBoundReport, cross_gramians, error_bound
from .gramians import (
    GramianSet,
    SemidefiniteFactor,
    ablate_mixed_gramians,
    compute_gramians,
    controllability_gramians,
    observability_gramians,
    psd_factor,
    solve_improper_stein,
    solve_proper_lyap,
)
from .model import (
    DescriptorSystem,
    OutputSpec,
    SystemManifest,
    ValidationReport,
    load_system,
    save_system,
    validate,
)
from .reduce import (
    HankelSpectrum,
    ReducedModel,
    balance_and_truncate,
    hankel_values,
    identity_reduction,
    load_reduced,
    save_reduced,
)
from .simulate import (
    OutputError,
    Signal,
    SignalNorms,
    Trajectory,
    output_error,
    parse_signal,
    signal_norms,
    simulate,
)
from .spectral import (
    SpectralProjectors,
    WeierstrassDecomposition,
    eval_FJ,
    eval_FN,
    projectors,
    separate,
)

__version__ = "0.1.0"
