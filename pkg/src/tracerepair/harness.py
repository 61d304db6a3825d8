"""Run orchestration: synthetic ground-truth suites, corpus ingestion and
the end-to-end scoring/repair pipeline.

The synthetic generator builds arithmetic tool-use traces with exactly one
injected fault and a known-correct payload, so the whole pipeline can be
evaluated offline against ground truth.  Runs are seeded, resumable and
bit-reproducible; all shared sinks are thread-safe and records are written
in corpus order regardless of worker scheduling.
"""

from __future__ import annotations

import json
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from .baselines import default_max_iters, self_refine, self_reflection
from .consensus import DEFAULT_TAU_C, validate_attribution
from .crs_engine import TraceScoring, score_trace
from .execution import (
    ChatGateway,
    DeterministicReplayExecutor,
    PredictiveExecutor,
    SandboxConfig,
    Verdict,
    verify,
    verify_trace,
)
from .gateway import GatewayConfig, HttpChatGateway, StubDirGateway
from .metrics_report import RunSummary, render_report
from .proposal import GatewayProposer, RuleMutatorProposer, full_mutation_schedule
from .repair import ContrastivePair, MinimalityScore, PairWriter, score_minimality, select_repair
from .trace_model import (
    Step,
    StepType,
    TaskSpec,
    Trace,
    final_answer_of,
    parse_trace,
    serialize_trace,
    substitute_step,
    validate_trace,
)
from .execution import reexecute_suffix

FAULT_KINDS = ("wrong_operand", "wrong_operator", "dropped_constraint", "wrong_tool_arg")

DEFAULT_FAULT_MIX = {
    "wrong_operand": 0.35,
    "wrong_operator": 0.25,
    "wrong_tool_arg": 0.25,
    "dropped_constraint": 0.15,
}


@dataclass(frozen=True)
class FaultRecord:
    trace_id: str
    injected_step: int
    fault_kind: str
    true_payload: str


@dataclass
class RunConfig:
    corpus_dir: str | None = None
    faults_path: str | None = None
    label: str = "corpus"
    method: str = "causal_repair"
    k: int = 3
    early_break: bool = True
    stop_after_first_causal_step: bool = False
    metric: str = "lexical"
    prompt_variant: str = "with_gold"
    tau_c: float = DEFAULT_TAU_C
    force_consensus: bool = False
    budget_cap: int = 150
    proposer: str = "auto"  # auto | rule_mutator | gateway
    gateway: GatewayConfig | None = None
    stub_dir: str | None = None
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    prompt_templates: dict[str, str] = field(default_factory=dict)
    out_dir: str = "run"
    workers: int = 4
    seed: int = 0
    emit_pairs: bool = True


# ---------------------------------------------------------------------------
# Synthetic fault-injected suite

_NOTE_VERBS = (
    "add", "fold in", "subtract", "apply", "scale by", "combine with",
    "account for", "carry over", "merge", "include",
)
_NOTE_NOUNS = (
    "the morning deliveries", "the spare crates", "the returned items",
    "the weekend backlog", "the counted inventory", "the pending orders",
    "the afternoon batch", "the reserve stock", "the checked totals",
    "the sorted parcels", "the late arrivals", "the verified entries",
)
_NOTE_TAILS = (
    "before the next update", "for the running total", "as recorded in the log",
    "per the checklist", "from the earlier count", "without skipping entries",
    "keeping units consistent", "as the plan requires",
)


@dataclass(frozen=True)
class _CallSpec:
    op: str  # + - *
    constants: tuple[int, ...]  # one constant, or two for a three-term call

    def expr(self, carried: int) -> str:
        text = f"{carried} {self.op} {self.constants[0]}"
        for extra in self.constants[1:]:
            text += f" + {extra}"
        return text

    def apply(self, carried: int) -> int:
        first = self.constants[0]
        if self.op == "+":
            value = carried + first
        elif self.op == "-":
            value = carried - first
        else:
            value = carried * first
        return value + sum(self.constants[1:])


@dataclass(frozen=True)
class _ChainPlan:
    start: int
    calls: tuple[_CallSpec, ...]
    notes: tuple[str, ...]
    reasoning_before: tuple[str | None, ...]  # optional reasoning step per call

    def values(self) -> list[int]:
        out = []
        v = self.start
        for call in self.calls:
            v = call.apply(v)
            out.append(v)
        return out


def _materialize(plan: _ChainPlan, trace_id: str, task: TaskSpec) -> Trace:
    steps: list[Step] = [
        Step(0, StepType.REASONING,
             "Track the running quantity and update it once per tool call, in order.")
    ]
    v = plan.start
    for call, note, thought in zip(plan.calls, plan.notes, plan.reasoning_before):
        if thought is not None:
            steps.append(Step(len(steps), StepType.REASONING, thought))
        payload = f"calc\nnote: {note}\nexpr: {call.expr(v)}"
        call_id = len(steps)
        steps.append(Step(call_id, StepType.TOOL_CALL, payload,
                          deps=(call_id - 1,) if call_id else ()))
        v = call.apply(v)
        steps.append(Step(len(steps), StepType.TOOL_RESPONSE, str(v), deps=(call_id,)))
    steps.append(
        Step(len(steps), StepType.FINAL_ANSWER, f"The final answer is {v}.",
             deps=(len(steps) - 1,))
    )
    return Trace(trace_id=trace_id, task=task, steps=tuple(steps))


def _draw_plan(rng: random.Random, depth: int) -> _ChainPlan:
    while True:
        start = rng.randint(12, 99)
        seen = {start}
        calls: list[_CallSpec] = []
        v = start
        ok = True
        for _ in range(depth):
            for _attempt in range(40):
                op = rng.choice("++-*" if v < 10**6 else "++--")
                constants: tuple[int, ...]
                if op == "+" and rng.random() < 0.45:
                    constants = (rng.randint(2, 9), rng.randint(2, 9))
                else:
                    constants = (rng.randint(2, 9),)
                call = _CallSpec(op, constants)
                nv = call.apply(v)
                # intermediate values stay two-digit-plus and globally unique so
                # numeric substitution during re-execution is unambiguous
                if nv >= 10 and nv not in seen:
                    seen.add(nv)
                    calls.append(call)
                    v = nv
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        notes = tuple(
            f"{rng.choice(_NOTE_VERBS)} {rng.choice(_NOTE_NOUNS)} {rng.choice(_NOTE_TAILS)}"
            for _ in range(depth)
        )
        reasoning = tuple(
            (f"Next, {rng.choice(_NOTE_VERBS)} {rng.choice(_NOTE_NOUNS)}."
             if rng.random() < 0.35 else None)
            for _ in range(depth)
        )
        return _ChainPlan(start, tuple(calls), notes, reasoning)


def _inject_fault(
    rng: random.Random, plan: _ChainPlan, mix: Mapping[str, float]
) -> tuple[_ChainPlan, int, str] | None:
    """Return (faulty plan, faulty call index, kind), or None if no slot fits."""
    kinds = list(mix.keys())
    weights = [mix[k] for k in kinds]
    kind = rng.choices(kinds, weights=weights, k=1)[0]
    indices = list(range(len(plan.calls)))
    rng.shuffle(indices)
    for idx in indices:
        call = plan.calls[idx]
        if kind == "wrong_operand":
            wrong = rng.choice([c for c in range(2, 10) if abs(c - call.constants[0]) >= 2])
            faulty = _CallSpec(call.op, (wrong,) + call.constants[1:])
        elif kind == "wrong_operator":
            swap = {"+": "*", "*": "+", "-": "+"}[call.op]
            faulty = _CallSpec(swap, call.constants)
        elif kind == "wrong_tool_arg":
            # corrupted carried operand is expressed via an equivalent constant
            # shift: the agent transcribed the previous result 10 too high
            faulty = None  # handled below at materialization level
        else:  # dropped_constraint
            if len(call.constants) < 2:
                continue
            faulty = _CallSpec(call.op, call.constants[:1])
        if kind == "wrong_tool_arg":
            return plan, idx, kind  # payload-level corruption, same plan
        new_calls = plan.calls[:idx] + (faulty,) + plan.calls[idx + 1 :]
        return replace(plan, calls=new_calls), idx, kind
    return None


def _fault_payloads(
    plan: _ChainPlan, faulty_plan: _ChainPlan, call_index: int, kind: str
) -> tuple[str, str]:
    """(true tool_call payload, faulty tool_call payload) at the injected call."""
    values = [plan.start] + plan.values()
    carried = values[call_index]
    note = plan.notes[call_index]
    true_call = plan.calls[call_index]
    true_payload = f"calc\nnote: {note}\nexpr: {true_call.expr(carried)}"
    if kind == "wrong_tool_arg":
        faulty_payload = f"calc\nnote: {note}\nexpr: {true_call.expr(carried + 10)}"
    else:
        faulty_payload = f"calc\nnote: {note}\nexpr: {faulty_plan.calls[call_index].expr(carried)}"
    return true_payload, faulty_payload


def _call_step_index(trace: Trace, call_ordinal: int) -> int:
    seen = -1
    for step in trace.steps:
        if step.step_type is StepType.TOOL_CALL:
            seen += 1
            if seen == call_ordinal:
                return step.id
    raise IndexError(f"trace has no tool_call ordinal {call_ordinal}")


def _make_faulty_trace(correct: Trace, injected_step: int, faulty_payload: str) -> Trace:
    """Replay the correct trace with the fault in place, start to finish."""
    prefix = substitute_step(correct, injected_step, faulty_payload)
    executor = DeterministicReplayExecutor(correct)
    return reexecute_suffix(prefix, correct.task, executor, "fault-injection").trace


def generate_synthetic_suite(
    count: int,
    depth_range: tuple[int, int] = (5, 9),
    fault_mix: Mapping[str, float] | None = None,
    seed: int = 0,
) -> tuple[list[Trace], list[FaultRecord]]:
    """Seeded corpus of faulty arithmetic traces with ground-truth repairs.

    Both FaultRecord invariants are verified at generation time through the
    real substitute/re-execute/verify machinery, and candidates where any
    schedule mutation at a non-injected step also flips the verdict are
    redrawn, so the injected step is provably the only causal one.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = depth_range
    if lo < 3 or hi < lo:
        raise ValueError("depth range must satisfy 3 <= lo <= hi")
    mix = dict(fault_mix or DEFAULT_FAULT_MIX)
    unknown = set(mix) - set(FAULT_KINDS)
    if unknown:
        raise ValueError(f"unknown fault kinds: {sorted(unknown)}")
    rng = random.Random(seed)
    traces: list[Trace] = []
    records: list[FaultRecord] = []
    index = 0
    while len(traces) < count:
        plan = _draw_plan(rng, rng.randint(lo, hi))
        injected = _inject_fault(rng, plan, mix)
        if injected is None:
            continue
        faulty_plan, call_index, kind = injected
        trace_id = f"synth-{seed}-{index:04d}"
        gold = str(plan.values()[-1])
        task = TaskSpec(
            problem_statement=(
                f"Starting from {plan.start}, apply the recorded operations in "
                "order and report the final quantity."
            ),
            gold_answer=gold,
            verifier_kind="numeric",
        )
        correct = _materialize(plan, trace_id, task)
        injected_step = _call_step_index(correct, call_index)
        true_payload, faulty_payload = _fault_payloads(plan, faulty_plan, call_index, kind)
        faulty = _make_faulty_trace(correct, injected_step, faulty_payload)
        index += 1
        if not _suite_candidate_ok(correct, faulty, injected_step, true_payload):
            continue
        traces.append(faulty)
        records.append(FaultRecord(trace_id, injected_step, kind, true_payload))
    return traces, records


def _suite_candidate_ok(
    correct: Trace, faulty: Trace, injected_step: int, true_payload: str
) -> bool:
    if validate_trace(faulty):
        return False
    if not verify_trace(correct).success:
        return False
    if verify_trace(faulty).success:
        return False
    executor = DeterministicReplayExecutor(faulty)
    repaired = reexecute_suffix(
        substitute_step(faulty, injected_step, true_payload), faulty.task, executor
    ).trace
    if not verify_trace(repaired).success:
        return False
    # no mutation at any other tool_call may flip the verdict
    for step in faulty.steps[:-1]:
        if step.step_type is not StepType.TOOL_CALL or step.id == injected_step:
            continue
        for proposal in full_mutation_schedule(faulty, step.id):
            rt = reexecute_suffix(
                substitute_step(faulty, step.id, proposal.payload), faulty.task, executor
            )
            if verify_trace(rt.trace).success:
                return False
    return True


def write_corpus(traces: Iterable[Trace], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in traces:
        (directory / f"{t.trace_id}.json").write_text(serialize_trace(t) + "\n", encoding="utf-8")
    return directory


def write_fault_records(records: Iterable[FaultRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), ensure_ascii=False) + "\n")
    return path


def read_fault_records(path: str | Path) -> list[FaultRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(FaultRecord(**json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Corpus ingestion


@dataclass
class CorpusHandle:
    traces: list[Trace]
    invalid: list[tuple[str, str]]  # (filename, reason)

    def by_verifier_kind(self) -> dict[str, list[Trace]]:
        groups: dict[str, list[Trace]] = {}
        for t in self.traces:
            groups.setdefault(t.task.verifier_kind, []).append(t)
        return groups


def ingest_corpus(path: str | Path) -> CorpusHandle:
    """Parse every trace document under ``path``; invalid ones are excluded
    and reported with reasons."""
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} does not exist")
    files = sorted(directory.glob("*.json"))
    if not files:
        raise FileNotFoundError(f"corpus directory {directory} contains no trace documents")
    traces: list[Trace] = []
    invalid: list[tuple[str, str]] = []
    for file in files:
        try:
            traces.append(parse_trace(file.read_bytes()))
        except Exception as e:  # noqa: BLE001 - report and continue
            invalid.append((file.name, str(e)))
    traces.sort(key=lambda t: t.trace_id)
    return CorpusHandle(traces=traces, invalid=invalid)


# ---------------------------------------------------------------------------
# Pipeline


def _resolve_gateway(config: RunConfig) -> ChatGateway | None:
    if config.stub_dir:
        return StubDirGateway(config.stub_dir)
    if config.gateway is not None:
        return HttpChatGateway(config.gateway)
    return None


def _make_verifier(trace: Trace, config: RunConfig, gateway: ChatGateway | None):
    def _verify(t: Trace) -> Verdict:
        return verify_trace(t, gateway=gateway, sandbox=config.sandbox)

    return _verify


def _make_executor(trace: Trace, config: RunConfig, gateway: ChatGateway | None):
    if trace.task.verifier_kind == "predictive":
        if gateway is None:
            raise ValueError("predictive traces need a gateway or stub directory")
        return PredictiveExecutor(gateway, config.prompt_templates.get("continuation"))
    return DeterministicReplayExecutor(trace, config.sandbox)


def _make_proposer(config: RunConfig, gateway: ChatGateway | None,
                   faults: Mapping[tuple[str, int], str]):
    choice = config.proposer
    if choice == "auto":
        choice = "gateway" if (gateway is not None and not faults) else "rule_mutator"
    if choice == "rule_mutator":
        return RuleMutatorProposer(faults)
    if choice == "gateway":
        if gateway is None:
            raise ValueError("gateway proposer requires a gateway or stub directory")
        return GatewayProposer(
            gateway,
            variant=config.prompt_variant,
            template_path=config.prompt_templates.get("intervention"),
        )
    raise ValueError(f"unknown proposer {choice!r}")


def _scoring_record(scoring: TraceScoring) -> dict[str, Any]:
    return {
        "causal_steps": scoring.causal_steps(),
        "exhaustive": scoring.exhaustive,
        "budget_truncated": scoring.budget_truncated,
        "steps": [
            {"i": s.step_index, "crs": s.crs, "attempts": s.attempts, "note": s.note}
            for s in scoring.scores
        ],
    }


def _process_causal_trace(
    t: Trace, config: RunConfig, gateway: ChatGateway | None,
    faults: Mapping[tuple[str, int], str],
) -> dict[str, Any]:
    record: dict[str, Any] = {"trace_id": t.trace_id, "verifier_kind": t.task.verifier_kind}
    verifier = _make_verifier(t, config, gateway)
    initial = verifier(t)
    if initial.success:
        record.update(status="passed")
        return record
    executor = _make_executor(t, config, gateway)
    proposer = _make_proposer(config, gateway, faults)
    scoring = score_trace(
        t, proposer, executor, verifier,
        k=config.k,
        early_break=config.early_break,
        budget_cap=config.budget_cap,
        stop_after_first_causal_step=config.stop_after_first_causal_step,
        initial_verdict=initial,
    )
    record.update(status="unrepaired", scoring=_scoring_record(scoring), pairs=[])
    deterministic = t.task.verifier_kind != "predictive"
    for score in scoring.scores:
        if score.crs != 1:
            continue
        selected = select_repair(score, config.metric)
        if selected is None:
            continue
        proposal, minimality = selected
        consensus_value: float | None = None
        needs_gate = (not deterministic or config.force_consensus) and config.emit_pairs
        if needs_gate and gateway is not None:
            validation = validate_attribution(
                t, score.step_index, gateway,
                tau_c=config.tau_c,
                end_feedback=initial.detail,
                critic_b_template=config.prompt_templates.get("critic_b"),
                critic_c_template=config.prompt_templates.get("critic_c"),
            )
            consensus_value = validation.score
            if not validation.retained:
                continue
        record["pairs"].append(
            {
                "step_index": score.step_index,
                "wrong": score.original_payload,
                "repaired": proposal.payload,
                "minimality_lexical": minimality.lexical,
                "minimality_edit": minimality.edit,
                "consensus": consensus_value,
                "proposal_provider": proposal.provider,
                "proposal_sample_index": proposal.sample_index,
            }
        )
    if record["pairs"]:
        record["status"] = "repaired"
    return record


def _process_baseline_trace(
    t: Trace, config: RunConfig, gateway: ChatGateway | None
) -> dict[str, Any]:
    record: dict[str, Any] = {"trace_id": t.trace_id, "verifier_kind": t.task.verifier_kind}
    initial_answer = final_answer_of(t) or ""
    initial = verify(initial_answer, t.task, gateway=gateway, sandbox=config.sandbox) \
        if initial_answer else Verdict(False, "trace has no final_answer step")
    if initial.success:
        record.update(status="passed")
        return record
    if config.method == "direct":
        # no refinement happens, so a failed trace stays failed by definition
        record.update(status="unrepaired", iterations=0, final_answer=initial_answer)
        return record
    if gateway is None:
        raise ValueError(f"baseline {config.method} requires a gateway or stub directory")
    templates = config.prompt_templates
    if config.method == "self_refine":
        outcome = self_refine(
            t.task, gateway,
            max_iters=default_max_iters(t.task),
            initial_solution=initial_answer,
            templates=templates,
        )
    elif config.method == "self_reflection":
        outcome = self_reflection(
            t.task, gateway, initial_answer,
            verifier=lambda answer: verify(answer, t.task, gateway=gateway, sandbox=config.sandbox),
            templates=templates,
        )
    else:
        raise ValueError(f"unknown method {config.method!r}")
    final = verify(outcome.final_answer, t.task, gateway=gateway, sandbox=config.sandbox)
    minimality = score_minimality(initial_answer, outcome.final_answer)
    record.update(
        status="repaired" if final.success else "unrepaired",
        iterations=outcome.iterations_used,
        truncated=outcome.truncated,
        minimality_lexical=minimality.lexical,
        minimality_edit=minimality.edit,
    )
    return record


def _completed_ids(records_path: Path) -> set[str]:
    if not records_path.exists():
        return set()
    done = set()
    for line in records_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            done.add(json.loads(line)["trace_id"])
    return done


def _snapshot(config: RunConfig) -> dict[str, Any]:
    snap = asdict(config)
    snap["sandbox"] = asdict(config.sandbox)
    if config.gateway is not None:
        snap["gateway"] = asdict(config.gateway)
    return snap


def run_pipeline(config: RunConfig, gateway: ChatGateway | None = None) -> Path:
    """Execute one configured run; returns the run directory.

    Layout: config.json snapshot, scoring.jsonl (one record per trace, in
    corpus order), pairs.jsonl, summary.csv / summary.md, run.log.  Already-
    recorded trace ids are skipped on re-invocation, so completed runs are
    no-ops and interrupted ones resume.
    """
    if config.corpus_dir is None:
        raise ValueError("run_pipeline needs corpus_dir")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(_snapshot(config), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    corpus = ingest_corpus(config.corpus_dir)
    if not corpus.traces:
        raise ValueError(
            f"corpus {config.corpus_dir} has no valid traces "
            f"({len(corpus.invalid)} invalid)"
        )

    faults: dict[tuple[str, int], str] = {}
    if config.faults_path:
        fault_records = read_fault_records(config.faults_path)
        faults = {(r.trace_id, r.injected_step): r.true_payload for r in fault_records}

    if gateway is None:
        gateway = _resolve_gateway(config)

    records_path = out / "scoring.jsonl"
    done = _completed_ids(records_path)
    todo = [t for t in corpus.traces if t.trace_id not in done]

    def _one(t: Trace) -> dict[str, Any]:
        try:
            if config.method == "causal_repair":
                return _process_causal_trace(t, config, gateway, faults)
            return _process_baseline_trace(t, config, gateway)
        except Exception as e:  # noqa: BLE001 - per-trace failures keep the run alive
            return {"trace_id": t.trace_id, "status": "error", "error": str(e)}

    new_records: list[dict[str, Any]]
    if config.workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            new_records = list(pool.map(_one, todo))
    else:
        new_records = [_one(t) for t in todo]

    pair_writer = PairWriter(out / "pairs.jsonl")
    with open(records_path, "a", encoding="utf-8") as fh:
        for t, record in zip(todo, new_records):
            if config.emit_pairs:
                for pair in record.get("pairs", []):
                    pair_writer.emit(_pair_from_record(t, pair))
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    all_records = [
        json.loads(line)
        for line in records_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    summary = summarize_run(config.label, config.method, all_records)
    report = render_report([summary])
    (out / "summary.csv").write_text(report.csv_text, encoding="utf-8")
    (out / "summary.md").write_text(report.markdown + "\n", encoding="utf-8")
    # the log is regenerated from run state so re-invocations are idempotent
    log_lines = [f"invalid trace {name}: {reason}" for name, reason in corpus.invalid]
    log_lines += [f"{r['trace_id']}: {r['status']}" for r in all_records]
    (out / "run.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return out


def _pair_from_record(t: Trace, pair: dict[str, Any]) -> ContrastivePair:
    return ContrastivePair(
        trace_id=t.trace_id,
        step_index=pair["step_index"],
        wrong_payload=pair["wrong"],
        repaired_payload=pair["repaired"],
        minimality=MinimalityScore(
            lexical=pair["minimality_lexical"],
            edit=pair["minimality_edit"],
            tokens_original=len(pair["wrong"].split()),
            tokens_repair=len(pair["repaired"].split()),
        ),
        consensus=pair["consensus"],
        verifier_mode="predictive" if t.task.verifier_kind == "predictive" else "deterministic",
    )


def summarize_run(label: str, method: str, records: list[dict[str, Any]]) -> RunSummary:
    """Aggregate per-trace records into one RunSummary row."""
    total = len(records)
    passed = sum(1 for r in records if r["status"] == "passed")
    failed = total - passed
    repaired = sum(1 for r in records if r["status"] == "repaired")
    lexicals: list[float] = []
    for r in records:
        for pair in r.get("pairs", []):
            lexicals.append(pair["minimality_lexical"])
        if "minimality_lexical" in r:
            lexicals.append(r["minimality_lexical"])
    consensus_values = [
        pair["consensus"]
        for r in records
        for pair in r.get("pairs", [])
        if pair.get("consensus") is not None
    ]
    return RunSummary(
        label=label,
        method=method,
        total=total,
        passed=passed,
        failed=failed,
        repaired=repaired,
        minimality_mean=statistics.mean(lexicals) if lexicals else None,
        crs_precision=None,
        consensus_rate=(
            statistics.mean(consensus_values) if consensus_values else None
        ),
    )
