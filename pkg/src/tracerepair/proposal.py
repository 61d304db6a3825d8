"""Candidate replacement generation for one step of a failed trace.

Two providers exist: the gateway provider renders the intervention prompt
and draws K temperature samples, and the rule mutator edits numeric
literals on a deterministic schedule so the whole pipeline can run with no
model at all.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping

from .execution import ChatGateway, format_number
from .gateway import GatewayError, cached_call
from .prompting import default_template_path, load_template, render_template
from .trace_model import StepType, Trace, final_answer_of

PROMPT_VARIANTS = ("with_gold", "no_gold")


@dataclass(frozen=True)
class Proposal:
    step_index: int
    payload: str
    provider: str  # gateway | rule_mutator
    sample_index: int
    prompt_variant: str = "with_gold"

    def __post_init__(self) -> None:
        if not self.payload:
            raise ValueError("proposal payload must be non-empty")
        if self.prompt_variant not in PROMPT_VARIANTS:
            raise ValueError(f"unknown prompt variant {self.prompt_variant!r}")

    @property
    def proposal_id(self) -> str:
        return f"{self.provider}:{self.sample_index}"


def render_previous_steps(t: Trace, i: int) -> str:
    if i == 0:
        return "(none)"
    return "\n".join(
        f"[{s.id}] {s.step_type.value}: {s.payload}" for s in t.steps[:i]
    )


def _guard_index(t: Trace, i: int) -> None:
    if not 0 <= i < len(t.steps) - 1:
        raise IndexError(f"step index {i} out of intervention range 0..{len(t.steps) - 2}")


def render_intervention_prompt(
    t: Trace,
    i: int,
    feedback: str,
    variant: str = "with_gold",
    template_path: str | Path | None = None,
) -> str:
    """Prompt asking for a minimal correction of step i.

    variant=no_gold substitutes WITHHELD for the gold answer so ablation
    runs never leak it; variant=with_gold requires a gold answer.
    """
    _guard_index(t, i)
    if variant not in PROMPT_VARIANTS:
        raise ValueError(f"unknown prompt variant {variant!r}")
    if variant == "with_gold":
        if t.task.gold_answer is None:
            raise ValueError("with_gold prompt variant requires task.gold_answer")
        gold = t.task.gold_answer
    else:
        gold = "WITHHELD"
    step = t.steps[i]
    template = load_template(template_path or default_template_path("intervention"))
    return render_template(
        template,
        {
            "problem_statement": t.task.problem_statement,
            "gold_answer": gold,
            "final_answer": final_answer_of(t) or "(no final answer)",
            "execution_logs": feedback or "(none)",
            "previous_step_context": render_previous_steps(t, i),
            "step_id": str(step.id),
            "step_type": step.step_type.value,
            "step_payload": step.payload,
        },
    )


def render_attribution_prompt(
    t: Trace,
    i: int,
    end_feedback: str,
    template_path: str | Path | None = None,
) -> str:
    """Prompt asking whether step i is the root cause of the failure."""
    _guard_index(t, i)
    if t.task.gold_answer is None:
        raise ValueError("attribution prompt requires task.gold_answer")
    step = t.steps[i]
    template = load_template(template_path or default_template_path("attribution"))
    return render_template(
        template,
        {
            "problem_statement": t.task.problem_statement,
            "gold_answer": t.task.gold_answer,
            "end_feedback": end_feedback or "(none)",
            "previous_step_context": render_previous_steps(t, i),
            "step_id": str(step.id),
            "step_type": step.step_type.value,
            "step_payload": step.payload,
        },
    )


_FENCED = re.compile(r"```[a-zA-Z0-9]*\s*\n(.*?)```", re.DOTALL)


def parse_reply_payload(reply: str) -> str:
    """Replacement payload from a gateway reply: fenced block if present,
    else the whole reply."""
    m = _FENCED.search(reply)
    text = m.group(1) if m else reply
    return text.strip("\n").strip() or reply.strip()


def generate_proposals(
    t: Trace,
    i: int,
    k: int,
    gateway: ChatGateway,
    variant: str = "with_gold",
    feedback: str = "",
    temperature: float | None = None,
    template_path: str | Path | None = None,
) -> list[Proposal]:
    """Draw K temperature-sampled replacement candidates for step i.

    Each sample is a separate gateway call; duplicates are retained as
    distinct samples.  Gateway exhaustion returns the proposals gathered
    so far (the caller records the shortfall).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    prompt = render_intervention_prompt(t, i, feedback, variant, template_path)
    if temperature is None:
        temperature = getattr(getattr(gateway, "config", None), "temperature", 0.7)
    proposals: list[Proposal] = []
    for sample_index in range(k):
        try:
            reply = cached_call(gateway, prompt, temperature, sample_index)
        except GatewayError:
            continue  # this sample is lost; later ones may still land
        payload = parse_reply_payload(reply)
        if not payload:
            continue
        proposals.append(
            Proposal(
                step_index=i,
                payload=payload,
                provider="gateway",
                sample_index=sample_index,
                prompt_variant=variant,
            )
        )
    return proposals


_LITERAL = re.compile(r"\d+(?:\.\d+)?")


def _replace_span(text: str, span: tuple[int, int], new: str) -> str:
    return text[: span[0]] + new + text[span[1] :]


def _digit_swap(literal: str) -> str | None:
    if "." in literal or len(literal) < 2 or literal[0] == literal[1]:
        return None
    swapped = literal[1] + literal[0] + literal[2:]
    swapped = swapped.lstrip("0") or "0"
    return None if swapped == literal else swapped


def mutate_numeric(
    t: Trace,
    i: int,
    k: int,
    true_payload: str | None = None,
) -> list[Proposal]:
    """Deterministic offline proposals: one numeric literal edited per candidate.

    Schedule order: the harness-supplied gold-consistent payload first (when
    given), then +1, -1, x10 and digit-swap applied to each literal left to
    right.  Steps with no numeric literal yield an empty list.
    """
    _guard_index(t, i)
    payload = t.steps[i].payload
    literals = list(_LITERAL.finditer(payload))
    if not literals:
        return []
    candidates: list[str] = []
    if true_payload and true_payload != payload:
        candidates.append(true_payload)

    def _numeric_variants(literal: str) -> list[str]:
        if "." in literal:
            whole, frac = literal.split(".")
            value = Fraction(int(whole or 0) * 10 ** len(frac) + int(frac), 10 ** len(frac))
        else:
            value = Fraction(int(literal))
        return [format_number(v) for v in (value + 1, value - 1, value * 10)]

    schedule: list[list[str | None]] = [[] for _ in range(4)]
    for m in literals:
        plus, minus, times = _numeric_variants(m.group(0))
        schedule[0].append(plus)
        schedule[1].append(minus)
        schedule[2].append(times)
        schedule[3].append(_digit_swap(m.group(0)))
    for variant_row in schedule:
        for m, new_literal in zip(literals, variant_row):
            if new_literal is None or new_literal == m.group(0):
                continue
            candidate = _replace_span(payload, m.span(), new_literal)
            if candidate != payload and candidate not in candidates:
                candidates.append(candidate)

    variant = "with_gold" if true_payload else "no_gold"
    return [
        Proposal(
            step_index=i,
            payload=candidate,
            provider="rule_mutator",
            sample_index=idx,
            prompt_variant=variant,
        )
        for idx, candidate in enumerate(candidates[:k])
    ]


def full_mutation_schedule(t: Trace, i: int) -> list[Proposal]:
    """Every schedule candidate regardless of K; used for harness screening."""
    return mutate_numeric(t, i, k=10**6)


class RuleMutatorProposer:
    """Offline proposer; optionally seeded with harness ground-truth payloads."""

    def __init__(self, true_payloads: Mapping[tuple[str, int], str] | None = None):
        self.true_payloads = dict(true_payloads or {})

    def propose(self, t: Trace, i: int, k: int) -> list[Proposal]:
        return mutate_numeric(t, i, k, self.true_payloads.get((t.trace_id, i)))


class GatewayProposer:
    """Model-backed proposer; feedback text comes from the failing verdict."""

    def __init__(
        self,
        gateway: ChatGateway,
        variant: str = "with_gold",
        temperature: float | None = None,
        template_path: str | Path | None = None,
        feedback_provider: Callable[[Trace], str] | None = None,
    ):
        self.gateway = gateway
        self.variant = variant
        self.temperature = temperature
        self.template_path = template_path
        self.feedback_provider = feedback_provider or (lambda t: "(verifier reported failure)")

    def propose(self, t: Trace, i: int, k: int) -> list[Proposal]:
        if t.steps[i].step_type is StepType.TOOL_RESPONSE:
            # observations are regenerated, not proposed against
            return []
        return generate_proposals(
            t, i, k, self.gateway,
            variant=self.variant,
            feedback=self.feedback_provider(t),
            temperature=self.temperature,
            template_path=self.template_path,
        )
