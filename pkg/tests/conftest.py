from __future__ import annotations

import random

import pytest

from tracerepair.trace_model import Step, StepType, TaskSpec, Trace


def build_trace(
    steps: list[tuple[StepType, str]],
    trace_id: str = "t-0",
    task: TaskSpec | None = None,
) -> Trace:
    """Assemble a trace from (type, payload) pairs with chain deps."""
    task = task or TaskSpec(problem_statement="compute the value", gold_answer="78")
    built = tuple(
        Step(id=i, step_type=st, payload=payload, deps=(i - 1,) if i else ())
        for i, (st, payload) in enumerate(steps)
    )
    return Trace(trace_id=trace_id, task=task, steps=built)


@pytest.fixture
def arithmetic_trace() -> Trace:
    """Failed 4-step fixture: the call should have been 6*13 (gold 78)."""
    return build_trace(
        [
            (StepType.REASONING, "Multiply the six crates by the count per crate."),
            (StepType.TOOL_CALL, "calc\n6*12"),
            (StepType.TOOL_RESPONSE, "72"),
            (StepType.FINAL_ANSWER, "72"),
        ]
    )


def random_valid_trace(rng: random.Random, trace_id: str = "r-0") -> Trace:
    """Arbitrary structurally-valid trace for round-trip style tests."""
    n_middle = rng.randint(0, 8)
    payload_pool = [
        "plain text", "unicode: café — naive", "numbers 1,234 and -7.5",
        "multi\nline\npayload", "braces {a: 1} [2]", "  padded  ", "x",
    ]
    types = [
        StepType.REASONING, StepType.TOOL_CALL, StepType.TOOL_RESPONSE,
        StepType.LLM_RESPONSE, StepType.MEMORY_ACCESS,
    ]
    steps: list[tuple[StepType, str]] = []
    for _ in range(n_middle):
        st = rng.choice(types)
        payload = "" if (st is StepType.MEMORY_ACCESS and rng.random() < 0.5) else rng.choice(payload_pool)
        steps.append((st, payload))
    if rng.random() < 0.8:
        steps.append((StepType.FINAL_ANSWER, rng.choice(["42", "the answer is 7"])))
    if not steps:
        steps = [(StepType.REASONING, "only step")]
    kind = rng.choice(["numeric", "predictive", "program_tests"])
    config = {"tests": ["assert True"]} if kind == "program_tests" else {}
    task = TaskSpec(
        problem_statement=rng.choice(payload_pool),
        gold_answer=rng.choice(["7", None]),
        verifier_kind=kind,
        verifier_config=config,
    )
    trace = build_trace(steps, trace_id=trace_id, task=task)
    # deps: random subset of earlier indices
    new_steps = []
    for s in trace.steps:
        deps = tuple(sorted(rng.sample(range(s.id), k=rng.randint(0, min(2, s.id))))) if s.id else ()
        new_steps.append(Step(s.id, s.step_type, s.payload, deps, dict(s.meta)))
    return Trace(trace_id=trace.trace_id, task=task, steps=tuple(new_steps))
