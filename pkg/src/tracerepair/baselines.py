"""Heuristic whole-answer refinement baselines.

These never touch the intervention machinery: no step substitution, no
suffix re-execution.  They regenerate or revise the complete answer, which
is exactly the behavioral contrast the causal pipeline is compared against.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .execution import ChatGateway, Verdict
from .gateway import GatewayError
from .prompting import default_template_path, load_template, render_template
from .trace_model import TaskSpec

STOP_TOKEN = "[STOP]"

METHODS = ("direct", "self_refine", "self_reflection")


@dataclass
class RefinementOutcome:
    method: str
    initial_answer: str
    final_answer: str
    iterations_used: int
    transcript: list[tuple[str, str]] = field(default_factory=list)
    truncated: bool = False  # gateway failed mid-loop; final is the last good answer


def default_max_iters(task: TaskSpec) -> int:
    # refinement budget: three cycles for program tasks, four otherwise
    return 3 if task.verifier_kind == "program_tests" else 4


def extract_answer(reply: str, task: TaskSpec) -> str:
    """Answer text from a free-form solution reply.

    Program tasks take the fenced code block (the runnable artifact);
    numeric and predictive tasks keep the full text, whose last numeral is
    what the verifier reads.
    """
    if task.verifier_kind == "program_tests":
        m = re.search(r"```[a-zA-Z0-9]*\s*\n(.*?)```", reply, re.DOTALL)
        if m:
            return m.group(1).strip("\n")
    return reply.strip()


def _render(name: str, values: dict[str, str], templates: Mapping[str, str | Path] | None) -> str:
    path = (templates or {}).get(name) or default_template_path(name)
    return render_template(load_template(path), values)


def _stopped(feedback: str) -> bool:
    lines = [line.strip() for line in feedback.strip().splitlines() if line.strip()]
    return bool(lines) and lines[-1] == STOP_TOKEN


def direct(
    task: TaskSpec,
    gateway: ChatGateway,
    templates: Mapping[str, str | Path] | None = None,
) -> RefinementOutcome:
    """Single-pass generation; no refinement, so it repairs nothing by definition."""
    prompt = _render("refine_generate", {"problem": task.problem_statement}, templates)
    reply = gateway.complete(prompt)
    answer = extract_answer(reply, task)
    return RefinementOutcome(
        method="direct",
        initial_answer=answer,
        final_answer=answer,
        iterations_used=0,
        transcript=[(prompt, reply)],
    )


def self_refine(
    task: TaskSpec,
    gateway: ChatGateway,
    max_iters: int | None = None,
    initial_solution: str | None = None,
    templates: Mapping[str, str | Path] | None = None,
) -> RefinementOutcome:
    """Generate, then loop feedback/revise until the reviewer emits [STOP].

    Stop detection is an exact, case-sensitive match of the trimmed final
    feedback line.  A feedback pass counts as one iteration whether or not
    it halts the loop.
    """
    if max_iters is None:
        max_iters = default_max_iters(task)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    transcript: list[tuple[str, str]] = []
    problem = task.problem_statement
    solution = initial_solution or ""
    initial = solution
    iterations = 0
    truncated = False
    try:
        if initial_solution is None:
            prompt = _render("refine_generate", {"problem": problem}, templates)
            reply = gateway.complete(prompt)
            transcript.append((prompt, reply))
            solution = initial = extract_answer(reply, task)
        for _ in range(max_iters):
            prompt = _render(
                "refine_feedback", {"problem": problem, "solution": solution}, templates
            )
            feedback = gateway.complete(prompt)
            transcript.append((prompt, feedback))
            iterations += 1
            if _stopped(feedback):
                break
            prompt = _render(
                "refine_revise",
                {"problem": problem, "solution": solution, "feedback": feedback},
                templates,
            )
            revised = gateway.complete(prompt)
            transcript.append((prompt, revised))
            solution = extract_answer(revised, task)
    except GatewayError:
        truncated = True
    return RefinementOutcome(
        method="self_refine",
        initial_answer=initial,
        final_answer=solution,
        iterations_used=iterations,
        transcript=transcript,
        truncated=truncated,
    )


def self_reflection(
    task: TaskSpec,
    gateway: ChatGateway,
    initial_answer: str,
    verifier: Callable[[str], Verdict],
    templates: Mapping[str, str | Path] | None = None,
) -> RefinementOutcome:
    """One structured reflection plus one re-answer; strictly single-pass.

    Refuses answers the verifier already accepts: reflection is defined
    only over incorrect initial answers.
    """
    if verifier(initial_answer).success:
        raise ValueError("initial answer is already correct; nothing to reflect on")
    transcript: list[tuple[str, str]] = []
    problem = task.problem_statement
    try:
        prompt = _render(
            "reflect_reflect", {"problem": problem, "wrong_solution": initial_answer}, templates
        )
        reflection = gateway.complete(prompt)
        transcript.append((prompt, reflection))
        prompt = _render(
            "reflect_reanswer", {"problem": problem, "reflection": reflection}, templates
        )
        reply = gateway.complete(prompt)
        transcript.append((prompt, reply))
        return RefinementOutcome(
            method="self_reflection",
            initial_answer=initial_answer,
            final_answer=extract_answer(reply, task),
            iterations_used=1,
            transcript=transcript,
        )
    except GatewayError:
        return RefinementOutcome(
            method="self_reflection",
            initial_answer=initial_answer,
            final_answer=initial_answer,
            iterations_used=0,
            transcript=transcript,
            truncated=True,
        )
