"""Multi-agent validation of causal attributions.

Two critic agents grade a flagged step: B critiques the attribution and C
meta-critiques with B's judgment in view.  Their labeled, confidence-
weighted agreement combines with the step's causal score into a consensus
value in [0, 1]; repairs pass the gate when it reaches the threshold.

Deterministic verifier modes skip this stage entirely by default: their
re-executors already give definitive success/failure outcomes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .execution import ChatGateway
from .prompting import default_template_path, load_template, render_template
from .proposal import render_previous_steps
from .trace_model import Trace

LABELS = ("AGREE", "PARTIAL", "DISAGREE")
DEFAULT_TAU_C = 0.5


@dataclass(frozen=True)
class Critique:
    agent: str  # B | C
    label: str
    confidence: float
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.agent not in ("B", "C"):
            raise ValueError(f"unknown critic agent {self.agent!r}")
        if self.label not in LABELS:
            raise ValueError(f"unknown agreement label {self.label!r}")
        object.__setattr__(self, "confidence", min(1.0, max(0.0, float(self.confidence))))


def agreement_weight(label: str) -> float:
    """AGREE -> 1, PARTIAL -> 0.5, DISAGREE -> 0."""
    try:
        return {"AGREE": 1.0, "PARTIAL": 0.5, "DISAGREE": 0.0}[label]
    except KeyError:
        raise ValueError(f"unknown agreement label {label!r}") from None


def consensus_score(crs: int, critiques: list[Critique]) -> float:
    """(crs + sum of confidence-weighted agreement over B and C) / 3, in [0, 1]."""
    if crs not in (0, 1):
        raise ValueError("crs must be 0 or 1")
    agents = sorted(c.agent for c in critiques)
    if agents != ["B", "C"]:
        raise ValueError(f"need exactly one critique each from B and C, got {agents}")
    weighted = sum(c.confidence * agreement_weight(c.label) for c in critiques)
    return (crs + weighted) / 3.0


_LABEL_RE = re.compile(r"LABEL:\s*(AGREE|PARTIAL|DISAGREE)", re.IGNORECASE)
_CONF_RE = re.compile(r"CONFIDENCE:\s*([0-9]*\.?[0-9]+)")
_RATIONALE_RE = re.compile(r"RATIONALE:\s*(.+)", re.DOTALL)


def parse_critique(agent: str, reply: str) -> tuple[Critique, bool]:
    """Parse a critic reply; unparseable replies fall back to (PARTIAL, 0.5).

    Returns (critique, parse_warning) - the warning flags that the fallback
    was used.
    """
    label_m = _LABEL_RE.search(reply)
    conf_m = _CONF_RE.search(reply)
    rationale_m = _RATIONALE_RE.search(reply)
    rationale = rationale_m.group(1).strip() if rationale_m else reply.strip()
    if label_m is None or conf_m is None:
        return Critique(agent=agent, label="PARTIAL", confidence=0.5, rationale=rationale), True
    return (
        Critique(
            agent=agent,
            label=label_m.group(1).upper(),
            confidence=float(conf_m.group(1)),
            rationale=rationale,
        ),
        False,
    )


@dataclass(frozen=True)
class AttributionValidation:
    retained: bool
    score: float
    critiques: tuple[Critique, Critique]
    parse_warnings: tuple[str, ...] = ()


def validate_attribution(
    t: Trace,
    step_index: int,
    gateway: ChatGateway,
    tau_c: float = DEFAULT_TAU_C,
    crs: int = 1,
    end_feedback: str = "",
    critic_b_template: str | Path | None = None,
    critic_c_template: str | Path | None = None,
) -> AttributionValidation:
    """Run B then C over one flagged step and gate on the consensus score.

    The score-equals-threshold boundary counts as retained.
    """
    if t.task.gold_answer is None:
        raise ValueError("attribution validation requires task.gold_answer")
    step = t.steps[step_index]
    common = {
        "problem_statement": t.task.problem_statement,
        "gold_answer": t.task.gold_answer,
        "end_feedback": end_feedback or "(none)",
        "previous_step_context": render_previous_steps(t, step_index),
        "step_id": str(step.id),
        "step_type": step.step_type.value,
        "step_payload": step.payload,
    }
    warnings: list[str] = []

    prompt_b = render_template(
        load_template(critic_b_template or default_template_path("critic_b")), common
    )
    reply_b = gateway.complete(prompt_b, temperature=0.0)
    critique_b, warned = parse_critique("B", reply_b)
    if warned:
        warnings.append("critic B reply unparseable; used (PARTIAL, 0.5)")

    prompt_c = render_template(
        load_template(critic_c_template or default_template_path("critic_c")),
        {**common, "critique_b": reply_b},
    )
    reply_c = gateway.complete(prompt_c, temperature=0.0)
    critique_c, warned = parse_critique("C", reply_c)
    if warned:
        warnings.append("critic C reply unparseable; used (PARTIAL, 0.5)")

    score = consensus_score(crs, [critique_b, critique_c])
    return AttributionValidation(
        retained=score >= tau_c,
        score=score,
        critiques=(critique_b, critique_c),
        parse_warnings=tuple(warnings),
    )
