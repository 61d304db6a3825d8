"""Causal responsibility scoring: intervene, re-execute, check the verdict.

For each candidate step of a failed trace, proposals are tried in sample
order; the step's score is 1 as soon as any replacement flips the verifier
from failure to success.  Early break is the default; exhaustive mode keeps
going so minimality ranking can see the full successful pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from .execution import ReexecutedTrace, SuffixExecutor, Verdict, reexecute_suffix
from .proposal import Proposal
from .trace_model import StepType, Trace, substitute_step

TraceVerifier = Callable[[Trace], Verdict]


class Proposer(Protocol):
    def propose(self, t: Trace, i: int, k: int) -> list[Proposal]: ...


@dataclass
class StepScore:
    step_index: int
    original_payload: str
    crs: int = 0
    successful_interventions: list[tuple[Proposal, ReexecutedTrace, Verdict]] = field(
        default_factory=list
    )
    attempts: int = 0
    note: str | None = None


@dataclass
class TraceScoring:
    trace_id: str
    scores: list[StepScore]
    exhaustive: bool
    budget_truncated: bool = False
    flagged_steps: list[int] | None = None  # attribution-prompt flags, when that stage ran

    def causal_steps(self) -> list[int]:
        return [s.step_index for s in self.scores if s.crs == 1]


def compute_crs_for_step(
    t: Trace,
    i: int,
    proposals: list[Proposal],
    executor: SuffixExecutor,
    verifier: TraceVerifier,
    early_break: bool = True,
) -> StepScore:
    """Score one step: substitute each proposal, re-execute, verify.

    Executor or verifier errors count as failed attempts (detail recorded in
    the note) so scoring always completes.
    """
    score = StepScore(step_index=i, original_payload=t.steps[i].payload)
    for proposal in sorted(proposals, key=lambda p: p.sample_index):
        score.attempts += 1
        try:
            prefix = substitute_step(t, i, proposal.payload)
            rt = reexecute_suffix(prefix, t.task, executor, proposal.proposal_id)
            verdict = verifier(rt.trace)
        except Exception as e:  # noqa: BLE001 - a bad attempt is a failed attempt
            score.note = f"attempt {proposal.proposal_id} errored: {e}"
            continue
        if verdict.success:
            score.crs = 1
            score.successful_interventions.append((proposal, rt, verdict))
            if early_break:
                break
    return score


def score_trace(
    t: Trace,
    proposer: Proposer,
    executor: SuffixExecutor,
    verifier: TraceVerifier,
    k: int = 3,
    early_break: bool = True,
    budget_cap: int = 150,
    stop_after_first_causal_step: bool = False,
    initial_verdict: Verdict | None = None,
) -> TraceScoring:
    """Score every non-final step of a failed trace, ascending.

    Proposals are requested lazily per step.  The evaluation budget is
    min(steps*K, budget_cap); once spent, the remaining (latest) steps are
    left unscored and the scoring is flagged as truncated.
    """
    verdict = initial_verdict if initial_verdict is not None else verifier(t)
    if verdict.success:
        raise ValueError(f"trace {t.trace_id} already verifies success; nothing to score")

    scoring = TraceScoring(trace_id=t.trace_id, scores=[], exhaustive=not early_break)
    spent = 0
    found_causal = False
    for i in range(len(t.steps) - 1):
        step = t.steps[i]
        if stop_after_first_causal_step and found_causal:
            scoring.scores.append(
                StepScore(i, step.payload, note="skipped-after-first-causal-step")
            )
            continue
        if spent >= budget_cap:
            scoring.scores.append(StepScore(i, step.payload, note="budget-exhausted"))
            scoring.budget_truncated = True
            continue
        if step.step_type is StepType.TOOL_RESPONSE and executor.mode == "deterministic":
            scoring.scores.append(
                StepScore(i, step.payload, note="tool_response regenerated by executor; skipped")
            )
            continue
        proposals = proposer.propose(t, i, k)
        budget_left = budget_cap - spent
        if len(proposals) > budget_left:
            proposals = sorted(proposals, key=lambda p: p.sample_index)[:budget_left]
            scoring.budget_truncated = True
        score = compute_crs_for_step(t, i, proposals, executor, verifier, early_break)
        if not score.note and len(proposals) < k and step.step_type is not StepType.TOOL_RESPONSE:
            score.note = f"proposer shortfall: {len(proposals)}/{k}"
        spent += score.attempts
        if score.crs == 1:
            found_causal = True
        scoring.scores.append(score)
    return scoring
