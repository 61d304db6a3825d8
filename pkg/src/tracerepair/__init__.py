"""Causal debugging of failed multi-step agent execution traces.

Identify failure-inducing steps by counterfactual step substitution with
suffix re-execution, generate minimally edited validated repairs, and
export (wrong step, repaired step) contrastive supervision pairs.
"""

from .trace_model import (
    Step,
    StepType,
    TaskSpec,
    Trace,
    TraceFormatError,
    final_answer_of,
    parse_trace,
    serialize_trace,
    substitute_step,
    validate_trace,
)
from .execution import (
    DeterministicReplayExecutor,
    PredictiveExecutor,
    ReexecutedTrace,
    SandboxConfig,
    SandboxLimits,
    Verdict,
    evaluate_expression,
    extract_number,
    predict_outcome,
    reexecute_suffix,
    run_sandboxed_tests,
    verify,
    verify_trace,
)
from .gateway import (
    GatewayConfig,
    GatewayError,
    HttpChatGateway,
    ScriptedGateway,
    StubDirGateway,
    cached_call,
)
from .proposal import (
    GatewayProposer,
    Proposal,
    RuleMutatorProposer,
    generate_proposals,
    mutate_numeric,
    render_attribution_prompt,
    render_intervention_prompt,
)
from .crs_engine import StepScore, TraceScoring, compute_crs_for_step, score_trace
from .repair import (
    ContrastivePair,
    MinimalityScore,
    PairWriter,
    emit_pair,
    minimality_edit,
    minimality_lexical,
    select_repair,
    tokenize,
)
from .consensus import (
    Critique,
    agreement_weight,
    consensus_score,
    validate_attribution,
)
from .baselines import RefinementOutcome, direct, self_refine, self_reflection
from .metrics_report import (
    RunSummary,
    accuracy_delta,
    crs_precision,
    render_report,
    repair_rate,
    wilson_interval,
)
from .harness import (
    FaultRecord,
    RunConfig,
    generate_synthetic_suite,
    ingest_corpus,
    run_pipeline,
)

__version__ = "0.1.0"
