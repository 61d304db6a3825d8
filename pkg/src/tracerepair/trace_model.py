"""Typed execution traces: the data model every other stage operates on.

A trace is an ordered chain of typed steps ending (when complete) in a
final_answer step.  Traces are immutable value objects after construction;
every operation here is pure and returns new objects, which is what makes
them safe to fan out across worker threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping


class TraceFormatError(ValueError):
    """Raised when a serialized trace document cannot be parsed."""


class StepType(Enum):
    REASONING = "reasoning"
    TOOL_CALL = "tool_call"
    TOOL_RESPONSE = "tool_response"
    LLM_RESPONSE = "llm_response"
    MEMORY_ACCESS = "memory_access"
    FINAL_ANSWER = "final_answer"


VERIFIER_KINDS = ("numeric", "program_tests", "predictive")


@dataclass(frozen=True)
class TaskSpec:
    """What the agent was asked to do and how success is judged."""

    problem_statement: str
    gold_answer: str | None = None
    verifier_kind: str = "numeric"
    verifier_config: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.verifier_kind not in VERIFIER_KINDS:
            raise ValueError(f"unknown verifier_kind {self.verifier_kind!r}")


@dataclass(frozen=True)
class Step:
    """One unit of agent execution.

    ``id`` is the dense ordinal position in the trace; external identifiers
    belong in ``meta``.  ``deps`` indices always point at earlier steps and
    are carried as metadata only: intervention scope is the full suffix.
    """

    id: int
    step_type: StepType
    payload: str
    deps: tuple[int, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    trace_id: str
    task: TaskSpec
    steps: tuple[Step, ...]

    def __len__(self) -> int:
        return len(self.steps)


def final_answer_of(t: Trace) -> str | None:
    """Payload of the trace's final_answer step, verbatim, or None.

    No normalization happens here; trimming and number extraction are the
    verifier's job.
    """
    for step in reversed(t.steps):
        if step.step_type is StepType.FINAL_ANSWER:
            return step.payload
    return None


def validate_trace(t: Trace) -> list[str]:
    """Return human-readable invariant violations; an empty list means valid."""
    violations: list[str] = []
    for pos, step in enumerate(t.steps):
        if step.id != pos:
            violations.append(f"step {pos}: id {step.id} breaks dense 0..n-1 ordering")
        for d in step.deps:
            if d >= step.id:
                violations.append(f"step {step.id}: forward dependency on {d}")
            elif d < 0:
                violations.append(f"step {step.id}: negative dependency {d}")
        if not step.payload and step.step_type is not StepType.MEMORY_ACCESS:
            violations.append(f"step {step.id}: empty payload")
    final_positions = [
        pos for pos, s in enumerate(t.steps) if s.step_type is StepType.FINAL_ANSWER
    ]
    if len(final_positions) > 1:
        violations.append("multiple final_answer steps")
    elif final_positions and final_positions[0] != len(t.steps) - 1:
        violations.append(
            f"final_answer step at {final_positions[0]} is not the last step"
        )
    if t.task.verifier_kind == "program_tests" and not t.task.verifier_config.get("tests"):
        violations.append("task: verifier_kind=program_tests requires a non-empty test list")
    return violations


def substitute_step(t: Trace, i: int, payload: str) -> Trace:
    """Build the intervention prefix: steps 0..i with step i carrying ``payload``.

    Steps after i are removed; regenerating them is the execution engine's
    job.  The final step is never a legal target, and the input trace is
    not modified.
    """
    if not 0 <= i < len(t.steps) - 1:
        raise IndexError(
            f"step index {i} out of intervention range 0..{len(t.steps) - 2}"
        )
    if t.steps[i].step_type is StepType.FINAL_ANSWER:
        raise ValueError(f"step {i} is a final_answer step and cannot be substituted")
    prefix = t.steps[: i + 1]
    new_step = replace(prefix[-1], payload=payload)
    return replace(t, steps=prefix[:-1] + (new_step,))


def serialize_trace(t: Trace) -> str:
    """Render a trace in the JSON trace file format (one document per trace)."""
    doc = {
        "trace_id": t.trace_id,
        "task": {
            "problem_statement": t.task.problem_statement,
            "gold_answer": t.task.gold_answer,
            "verifier_kind": t.task.verifier_kind,
            "verifier_config": dict(t.task.verifier_config),
        },
        "steps": [
            {
                "id": s.id,
                "type": s.step_type.value,
                "payload": s.payload,
                "deps": list(s.deps),
                "meta": dict(s.meta),
            }
            for s in t.steps
        ],
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)


def parse_trace(data: bytes | str) -> Trace:
    """Parse one trace document, enforcing every structural invariant.

    Raises TraceFormatError naming the offending step and rule; a parsed
    trace always passes :func:`validate_trace`.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"malformed trace document: {e}") from e
    if not isinstance(doc, dict):
        raise TraceFormatError("malformed trace document: top level is not an object")
    for key in ("trace_id", "task", "steps"):
        if key not in doc:
            raise TraceFormatError(f"missing required field {key!r}")
    task_doc = doc["task"]
    if not isinstance(task_doc, dict) or "problem_statement" not in task_doc:
        raise TraceFormatError("task object missing problem_statement")
    try:
        task = TaskSpec(
            problem_statement=task_doc["problem_statement"],
            gold_answer=task_doc.get("gold_answer"),
            verifier_kind=task_doc.get("verifier_kind", "numeric"),
            verifier_config=dict(task_doc.get("verifier_config") or {}),
        )
    except ValueError as e:
        raise TraceFormatError(str(e)) from e

    steps: list[Step] = []
    raw_steps = doc["steps"]
    if not isinstance(raw_steps, list):
        raise TraceFormatError("steps is not a list")
    for pos, raw in enumerate(raw_steps):
        if not isinstance(raw, dict):
            raise TraceFormatError(f"step {pos}: not an object")
        try:
            step_type = StepType(raw.get("type"))
        except ValueError:
            raise TraceFormatError(
                f"step {pos}: unknown step type {raw.get('type')!r}"
            ) from None
        step_id = raw.get("id")
        if step_id != pos:
            raise TraceFormatError(
                f"step {pos}: id {step_id!r} (ids must be dense 0..n-1)"
            )
        deps = tuple(raw.get("deps") or ())
        for d in deps:
            if not isinstance(d, int) or d >= pos or d < 0:
                raise TraceFormatError(f"forward dependency at step {pos}: {d!r}")
        steps.append(
            Step(
                id=pos,
                step_type=step_type,
                payload=raw.get("payload", ""),
                deps=deps,
                meta=dict(raw.get("meta") or {}),
            )
        )
    trace = Trace(trace_id=str(doc["trace_id"]), task=task, steps=tuple(steps))
    problems = validate_trace(trace)
    if problems:
        raise TraceFormatError("; ".join(problems))
    return trace
