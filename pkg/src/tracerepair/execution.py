"""Verifiers and suffix re-execution.

Three verifier families back the binary success signal: exact arithmetic
(numeric answers), sandboxed program tests, and model-graded prediction.
The suffix executors regenerate the steps after an intervention point,
either by deterministic tool replay or by one model call.
"""

from __future__ import annotations

import json
import math
import os
import re
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Protocol

from .prompting import default_template_path, load_template, render_template
from .trace_model import Step, StepType, TaskSpec, Trace, final_answer_of

DEFAULT_TOLERANCE = 1e-6


class ExpressionError(ValueError):
    """Arithmetic text could not be parsed or evaluated."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


class SandboxUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class Verdict:
    success: bool
    detail: str = ""
    mode: str = "deterministic"  # deterministic | predictive


# ---------------------------------------------------------------------------
# Arithmetic evaluation


_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([()+\-*/]))")

# Unicode operator spellings normalized before tokenizing.
_NORMALIZE = str.maketrans({"−": "-", "×": "*", "÷": "/"})


def _tokenize_expr(expr: str) -> list[tuple[str, str, int]]:
    expr = expr.translate(_NORMALIZE)
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(expr):
        m = _TOKEN.match(expr, pos)
        if m is None:
            stripped = expr[pos:].lstrip()
            if not stripped:
                break
            raise ExpressionError(f"unexpected character {stripped[0]!r}", pos)
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), m.start(1)))
        else:
            tokens.append(("op", m.group(2), m.start(2)))
        pos = m.end()
    tokens.append(("end", "", len(expr)))
    return tokens


class _Parser:
    """Recursive-descent parser over + - * / ( ) with unary minus."""

    def __init__(self, tokens: list[tuple[str, str, int]]):
        self.tokens = tokens
        self.idx = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.idx]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def parse(self) -> Fraction:
        value = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {text!r}", pos)
        return value

    def expr(self) -> Fraction:
        value = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            _, op, _ = self.advance()
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Fraction:
        value = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            _, op, pos = self.advance()
            rhs = self.factor()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise ExpressionError("division by zero", pos)
                value = value / rhs
        return value

    def factor(self) -> Fraction:
        kind, text, pos = self.peek()
        if (kind, text) == ("op", "-"):
            self.advance()
            return -self.factor()
        if (kind, text) == ("op", "+"):
            self.advance()
            return self.factor()
        if kind == "num":
            self.advance()
            if "." in text:
                whole, frac = text.split(".")
                return Fraction(int(whole or 0) * 10 ** len(frac) + int(frac), 10 ** len(frac))
            return Fraction(int(text))
        if (kind, text) == ("op", "("):
            self.advance()
            value = self.expr()
            kind, text, pos = self.peek()
            if (kind, text) != ("op", ")"):
                raise ExpressionError("expected ')'", pos)
            self.advance()
            return value
        raise ExpressionError(f"expected a number, got {text!r}" if text else "unexpected end of expression", pos)


def evaluate_expression(expr: str) -> Fraction:
    """Exact value of an arithmetic expression under standard precedence."""
    if not expr.strip():
        raise ExpressionError("empty expression", 0)
    return _Parser(_tokenize_expr(expr)).parse()


def format_number(value: Fraction, significant_digits: int = 15) -> str:
    """Canonical text form of an exact value.

    Integers render bare; non-integers as decimals with at least 12
    significant digits (default 15).
    """
    if value.denominator == 1:
        return str(value.numerator)
    digits = max(12, significant_digits)
    text = f"{float(value):.{digits}g}"
    # float round-trip is fine at <= 15 significant digits
    return text


_NUMBER = re.compile(
    r"(?<![\w.])[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|(?<![\w.])[-+]?\.\d+"
)


def extract_number(text: str) -> float | None:
    """The last standalone numeric literal in ``text``, or None.

    Thousands separators and surrounding currency symbols / trailing
    punctuation are not part of the literal; signs are honored only when
    not glued to a preceding word character, so ranges like ``5-3`` read
    as two numbers.
    """
    matches = [m.group(0) for m in _NUMBER.finditer(text)]
    if not matches:
        return None
    return float(matches[-1].replace(",", ""))


# ---------------------------------------------------------------------------
# Sandboxed program tests


@dataclass(frozen=True)
class SandboxLimits:
    wall_time: float = 10.0
    memory: int = 512 * 1024 * 1024


@dataclass(frozen=True)
class SandboxConfig:
    backend: str = "subprocess"  # subprocess | docker
    interpreter: str = sys.executable
    docker_image: str = "python:3.11-slim"


_RUNNER_TEMPLATE = """\
{program}

import sys as _sys

_tests = {tests!r}
for _i, _t in enumerate(_tests):
    try:
        exec(compile(_t, "<test %d>" % _i, "exec"))
    except Exception as _e:
        print("FAILED test %d: %s :: %r" % (_i, _t, _e), file=_sys.stderr)
        _sys.exit(1)
print("ALL-PASS")
"""


def _posix_rlimits(limits: SandboxLimits):
    import resource

    def _apply() -> None:
        cpu = max(1, int(math.ceil(limits.wall_time)) + 1)
        resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu))
        resource.setrlimit(resource.RLIMIT_AS, (limits.memory, limits.memory))
        resource.setrlimit(resource.RLIMIT_FSIZE, (16 * 1024 * 1024, 16 * 1024 * 1024))

    return _apply


def run_sandboxed_tests(
    program: str,
    tests: list[str],
    limits: SandboxLimits = SandboxLimits(),
    config: SandboxConfig = SandboxConfig(),
) -> Verdict:
    """Run ``program`` plus each test assertion inside an isolated sandbox.

    Success means every assertion executed cleanly within the limits.
    Timeouts and failing assertions are verdict failures, never exceptions,
    so scoring loops keep iterating.
    """
    if limits.wall_time <= 0 or limits.memory <= 0:
        raise ValueError("sandbox limits must be positive")
    script = _RUNNER_TEMPLATE.format(program=program, tests=list(tests))
    if config.backend == "subprocess":
        return _run_subprocess(script, limits, config)
    if config.backend == "docker":
        return _run_docker(script, limits, config)
    raise SandboxUnavailableError(f"unknown sandbox backend {config.backend!r}")


def _scrub(text: str, workdir: str) -> str:
    return text.replace(workdir, "<sandbox>")


def _run_subprocess(script: str, limits: SandboxLimits, config: SandboxConfig) -> Verdict:
    try:
        import resource  # noqa: F401  (POSIX only)
    except ImportError as e:
        raise SandboxUnavailableError("subprocess backend needs POSIX rlimits") from e
    workdir = tempfile.mkdtemp(prefix="sandbox-")
    script_path = os.path.join(workdir, "runner.py")
    try:
        with open(script_path, "w", encoding="utf-8") as fh:
            fh.write(script)
        env = {"PATH": os.environ.get("PATH", "/usr/bin:/bin"), "HOME": workdir}
        proc = subprocess.Popen(
            [config.interpreter, "-I", script_path],
            cwd=workdir,
            env=env,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            preexec_fn=_posix_rlimits(limits),
            text=True,
        )
        try:
            out, err = proc.communicate(timeout=limits.wall_time)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            return Verdict(False, "timeout")
        if proc.returncode == 0 and "ALL-PASS" in out:
            return Verdict(True, "all tests passed")
        detail = _scrub(err.strip() or out.strip() or f"exit code {proc.returncode}", workdir)
        return Verdict(False, detail)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def _run_docker(script: str, limits: SandboxLimits, config: SandboxConfig) -> Verdict:
    if shutil.which("docker") is None:
        raise SandboxUnavailableError("docker binary not found")
    cmd = [
        "docker", "run", "--rm", "-i", "--network=none",
        f"--memory={limits.memory}",
        config.docker_image, "python", "-I", "-",
    ]
    try:
        proc = subprocess.run(
            cmd, input=script, capture_output=True, text=True, timeout=limits.wall_time
        )
    except subprocess.TimeoutExpired:
        return Verdict(False, "timeout")
    if proc.returncode == 0 and "ALL-PASS" in proc.stdout:
        return Verdict(True, "all tests passed")
    return Verdict(False, proc.stderr.strip() or proc.stdout.strip() or f"exit code {proc.returncode}")


# ---------------------------------------------------------------------------
# Verification


class ChatGateway(Protocol):
    model: str

    def complete(self, prompt: str, *, temperature: float | None = None, sample_index: int = 0) -> str: ...


def _grade_with_gateway(
    problem_statement: str,
    gold_answer: str | None,
    final_answer: str,
    gateway: ChatGateway,
    template_path: str | Path | None = None,
) -> Verdict:
    template = load_template(template_path or default_template_path("grader"))
    prompt = render_template(
        template,
        {
            "problem_statement": problem_statement,
            "gold_answer": gold_answer if gold_answer is not None else "(not provided)",
            "final_answer": final_answer,
        },
    )
    reply = gateway.complete(prompt, temperature=0.0)
    if re.search(r"\bINCORRECT\b", reply):
        return Verdict(False, reply.strip(), mode="predictive")
    if re.search(r"\bCORRECT\b", reply):
        return Verdict(True, reply.strip(), mode="predictive")
    return Verdict(False, "grader-unparseable", mode="predictive")


def verify(
    answer: str,
    task: TaskSpec,
    gateway: ChatGateway | None = None,
    sandbox: SandboxConfig | None = None,
    grader_template: str | Path | None = None,
) -> Verdict:
    """Binary success verdict for a final answer under the task's verifier."""
    kind = task.verifier_kind
    if kind == "numeric":
        if task.gold_answer is None:
            raise ValueError("numeric verifier requires a gold_answer")
        got = extract_number(answer)
        want = extract_number(task.gold_answer)
        if want is None:
            raise ValueError(f"gold answer {task.gold_answer!r} contains no numeral")
        if got is None:
            return Verdict(False, f"no numeral found in answer {answer!r}")
        abs_tol = float(task.verifier_config.get("tolerance", DEFAULT_TOLERANCE))
        rel_tol = float(task.verifier_config.get("relative_tolerance", DEFAULT_TOLERANCE))
        diff = abs(got - want)
        if diff <= abs_tol or diff <= rel_tol * abs(want):
            return Verdict(True, f"{got} matches {want}")
        return Verdict(False, f"{got} != {want} (|diff|={diff})")
    if kind == "program_tests":
        tests = list(task.verifier_config.get("tests") or [])
        if not tests:
            raise ValueError("program_tests verifier requires a non-empty test list")
        limits = SandboxLimits(
            wall_time=float(task.verifier_config.get("wall_time", 10.0)),
            memory=int(task.verifier_config.get("memory", 512 * 1024 * 1024)),
        )
        return run_sandboxed_tests(answer, tests, limits, sandbox or SandboxConfig())
    if kind == "predictive":
        if gateway is None:
            raise ValueError("predictive verifier requires a gateway")
        return _grade_with_gateway(
            task.problem_statement, task.gold_answer, answer, gateway,
            grader_template or task.verifier_config.get("grader_template"),
        )
    raise ValueError(f"unknown verifier_kind {kind!r}")


def predict_outcome(
    trace: Trace,
    task: TaskSpec,
    gateway: ChatGateway,
    template_path: str | Path | None = None,
) -> Verdict:
    """Model-graded verdict over a complete trace's final answer."""
    answer = final_answer_of(trace)
    if answer is None:
        return Verdict(False, "trace has no final_answer step", mode="predictive")
    return _grade_with_gateway(
        task.problem_statement, task.gold_answer, answer, gateway,
        template_path or task.verifier_config.get("grader_template"),
    )


def verify_trace(
    t: Trace,
    gateway: ChatGateway | None = None,
    sandbox: SandboxConfig | None = None,
    grader_template: str | Path | None = None,
) -> Verdict:
    """Verdict for a whole trace; missing final answers fail outright."""
    answer = final_answer_of(t)
    if answer is None:
        mode = "predictive" if t.task.verifier_kind == "predictive" else "deterministic"
        return Verdict(False, "trace has no final_answer step", mode=mode)
    return verify(answer, t.task, gateway=gateway, sandbox=sandbox,
                  grader_template=grader_template)


# ---------------------------------------------------------------------------
# Suffix re-execution


@dataclass(frozen=True)
class ReexecutedTrace:
    trace: Trace
    origin: tuple[str, int, str]  # (source trace_id, intervened step index, proposal id)


class SuffixExecutor(Protocol):
    mode: str

    def continue_trace(self, prefix: Trace) -> list[Step]: ...


def parse_tool_call(payload: str) -> tuple[str, str]:
    """Split a tool_call payload into (tool name, arguments document).

    Single-line payloads are treated as bare arguments for the arithmetic
    tool, so minimal traces can write a tool_call as just ``6*12``.
    """
    lines = payload.split("\n", 1)
    if len(lines) == 2 and re.fullmatch(r"[A-Za-z_][\w.-]*", lines[0].strip()):
        return lines[0].strip(), lines[1]
    return "calc", payload


def _extract_expr(args: str) -> str:
    for line in args.splitlines():
        stripped = line.strip()
        if stripped.lower().startswith("expr:"):
            return stripped[5:].strip()
    return args.strip()


# trailing sentence punctuation is fine; only a decimal continuation blocks
_SUB_BOUNDARY = "(?<![\\d.]){}(?!\\.?\\d)"


def _apply_substitutions(text: str, subs: dict[str, str]) -> str:
    # longest keys first so '123' wins over '12' when both are stale
    for old in sorted(subs, key=len, reverse=True):
        text = re.sub(_SUB_BOUNDARY.format(re.escape(old)), subs[old], text)
    return text


class DeterministicReplayExecutor:
    """Replays the original trace's suffix, recomputing every tool_response.

    Reasoning and model-response steps are carried forward verbatim; tool
    results that change propagate into later tool_call payloads and the
    final answer by whole-token numeric substitution.
    """

    mode = "deterministic"

    def __init__(self, original: Trace, sandbox: SandboxConfig | None = None):
        self.original = original
        self.sandbox = sandbox or SandboxConfig()

    def continue_trace(self, prefix: Trace) -> list[Step]:
        i = len(prefix.steps) - 1
        subs: dict[str, str] = {}
        orig_step = self.original.steps[i]
        new_step = prefix.steps[i]
        if (
            orig_step.step_type is StepType.TOOL_RESPONSE
            and orig_step.payload != new_step.payload
        ):
            subs[orig_step.payload.strip()] = new_step.payload.strip()

        effective: list[Step] = list(prefix.steps)
        out: list[Step] = []
        for orig in self.original.steps[i + 1 :]:
            if orig.step_type is StepType.TOOL_RESPONSE:
                call = next(
                    (s for s in reversed(effective) if s.step_type is StepType.TOOL_CALL),
                    None,
                )
                new_payload, meta = self._run_tool(call, orig)
                if orig.payload.strip() and new_payload.strip() != orig.payload.strip():
                    subs[orig.payload.strip()] = new_payload.strip()
                step = Step(orig.id, orig.step_type, new_payload, orig.deps, meta or dict(orig.meta))
            elif orig.step_type in (StepType.TOOL_CALL, StepType.FINAL_ANSWER):
                step = Step(
                    orig.id, orig.step_type,
                    _apply_substitutions(orig.payload, subs),
                    orig.deps, dict(orig.meta),
                )
            else:
                step = orig
            effective.append(step)
            out.append(step)
        return out

    def _run_tool(self, call: Step | None, orig: Step) -> tuple[str, dict | None]:
        if call is None:
            return orig.payload, None
        tool, args = parse_tool_call(call.payload)
        try:
            if tool in ("calc", "calculator", "math"):
                return format_number(evaluate_expression(_extract_expr(args))), None
            if tool in ("run_tests", "tests"):
                verdict = run_sandboxed_tests(
                    args,
                    list(self.original.task.verifier_config.get("tests") or []),
                    config=self.sandbox,
                )
                return ("pass" if verdict.success else f"fail: {verdict.detail}"), None
            return f"error: unknown tool {tool!r}", {"exec_error": f"unknown tool {tool!r}"}
        except (ExpressionError, SandboxUnavailableError, ValueError) as e:
            return f"error: {e}", {"exec_error": str(e)}


class PredictiveExecutor:
    """One gateway call generates the continuation steps and final answer."""

    mode = "predictive"

    def __init__(self, gateway: ChatGateway, template_path: str | Path | None = None):
        self.gateway = gateway
        self.template = load_template(template_path or default_template_path("continuation"))

    def continue_trace(self, prefix: Trace) -> list[Step]:
        rendered_prefix = "\n".join(
            f"[{s.id}] {s.step_type.value}: {s.payload}" for s in prefix.steps
        )
        prompt = render_template(
            self.template,
            {
                "problem_statement": prefix.task.problem_statement,
                "prefix_steps": rendered_prefix,
            },
        )
        reply = self.gateway.complete(prompt, temperature=0.0)
        raw = _fenced_or_raw(reply)
        try:
            items = json.loads(raw)
            if not isinstance(items, list):
                raise ValueError("continuation is not a list")
        except (json.JSONDecodeError, ValueError) as e:
            raise RuntimeError(f"unparseable continuation reply: {e}") from e
        steps = []
        base = len(prefix.steps)
        for offset, item in enumerate(items):
            steps.append(
                Step(
                    id=base + offset,
                    step_type=StepType(item["type"]),
                    payload=str(item["payload"]),
                    deps=(base + offset - 1,) if base + offset > 0 else (),
                )
            )
        return steps


def _fenced_or_raw(reply: str) -> str:
    m = re.search(r"```(?:json)?\s*\n(.*?)```", reply, re.DOTALL)
    return m.group(1) if m else reply


def reexecute_suffix(
    prefix: Trace,
    task: TaskSpec,
    executor: SuffixExecutor,
    proposal_id: str = "",
) -> ReexecutedTrace:
    """Complete the intervened prefix into a full trace ending in final_answer.

    Executor failures become traces that will fail verification (with the
    error recorded in step meta) rather than raised exceptions, so one bad
    proposal never aborts a scoring run.
    """
    i = len(prefix.steps) - 1
    try:
        continuation = executor.continue_trace(prefix)
    except Exception as e:  # noqa: BLE001 - failures count as failed attempts
        continuation = [
            Step(
                id=len(prefix.steps),
                step_type=StepType.FINAL_ANSWER,
                payload="(suffix re-execution failed)",
                meta={"exec_error": str(e)},
            )
        ]
    steps = list(prefix.steps) + list(continuation)
    if steps[-1].step_type is not StepType.FINAL_ANSWER:
        steps.append(
            Step(
                id=len(steps),
                step_type=StepType.FINAL_ANSWER,
                payload="(no final answer produced)",
                meta={"exec_error": "executor produced no final_answer step"},
            )
        )
    # reindex defensively; predictive continuations may differ in length
    steps = [
        Step(pos, s.step_type, s.payload, s.deps if all(d < pos for d in s.deps) else (), dict(s.meta))
        for pos, s in enumerate(steps)
    ]
    trace = Trace(trace_id=prefix.trace_id, task=task, steps=tuple(steps))
    return ReexecutedTrace(trace=trace, origin=(prefix.trace_id, i, proposal_id))
