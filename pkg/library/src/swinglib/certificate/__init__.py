from swinglib.certificate.assessment import (
    BraessImpact,
    CertificateReport,
    GeneratorAssessment,
    LineImpact,
    ParameterMargin,
    Verdict,
    assess_corollary1,
    assess_theorem1,
    damping_threshold,
    line_addition_impact,
    neighbor_sum,
    parameter_margins,
    stability_index,
)
from swinglib.certificate.experiments import (
    SoundnessOutcome,
    SoundnessSummary,
    check_case,
    find_braess_flip,
    iter_soundness,
    soundness_experiment,
    summarize_soundness,
)
from swinglib.certificate.monitor import (
    AgentVerdict,
    GeneratorAgent,
    LocalConstants,
    MonitorInput,
    MonitorResult,
    constants_from_report,
    distributed_assess,
    streams_from_frame,
)

__all__ = [
    "AgentVerdict",
    "BraessImpact",
    "CertificateReport",
    "GeneratorAgent",
    "GeneratorAssessment",
    "LineImpact",
    "LocalConstants",
    "MonitorInput",
    "MonitorResult",
    "ParameterMargin",
    "SoundnessOutcome",
    "SoundnessSummary",
    "Verdict",
    "assess_corollary1",
    "assess_theorem1",
    "check_case",
    "constants_from_report",
    "damping_threshold",
    "distributed_assess",
    "find_braess_flip",
    "iter_soundness",
    "line_addition_impact",
    "neighbor_sum",
    "parameter_margins",
    "soundness_experiment",
    "stability_index",
    "streams_from_frame",
    "summarize_soundness",
]
