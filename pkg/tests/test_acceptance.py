"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the criterion
lines as they complete.
"""

from __future__ import annotations

import json
import random
import socket
import statistics
import time
from fractions import Fraction
from pathlib import Path

import pytest

from tracerepair.consensus import Critique, consensus_score
from tracerepair.crs_engine import score_trace
from tracerepair.execution import (
    DeterministicReplayExecutor,
    reexecute_suffix,
    verify,
    verify_trace,
)
from tracerepair.harness import (
    RunConfig,
    generate_synthetic_suite,
    run_pipeline,
    write_corpus,
    write_fault_records,
)
from tracerepair.metrics_report import (
    accuracy_delta,
    load_reference_counts,
    repair_rate,
    wilson_interval,
)
from tracerepair.baselines import direct, self_refine, self_reflection
from tracerepair.gateway import ScriptedGateway
from tracerepair.repair import minimality_lexical, read_pairs
from tracerepair.trace_model import (
    Step,
    StepType,
    TaskSpec,
    Trace,
    parse_trace,
    serialize_trace,
    substitute_step,
    validate_trace,
)

from conftest import build_trace, random_valid_trace
from test_crs_engine import TableExecutor, TableProposer, make_base_trace, table_verifier


def report(number: int, name: str, ok: bool, elapsed: float, budget: float) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"criterion {number} [{status}] {name} ({elapsed:.2f}s / budget {budget:.0f}s)")


# -- criterion 1: position-match similarity fixture --------------------------

MINIMALITY_CASES = [
    ([], [], 1.0),
    (["a"], [], 0.0),
    ([], ["a"], 0.0),
    (["a"], ["a"], 1.0),
    (["a"], ["b"], 0.0),
    (["a", "b", "c"], ["a", "b", "c"], 1.0),
    (["a", "b", "c"], ["a", "b", "d"], 0.6666666666666666),
    (["a", "b", "c", "d"], ["a", "b"], 0.375),
    (["a", "b"], ["a", "b", "c", "d"], 0.375),
    (["x"], ["x", "y"], 0.375),
    (["6", "*", "12"], ["6", "*", "13"], 0.6666666666666666),
    (["a", "b", "c", "d", "e"], ["a", "x", "c", "x", "e"], 0.6),
    (["a", "a", "a"], ["a", "a", "a", "a", "a", "a"], 0.375),
    (["p", "q", "r", "s"], ["q", "p", "r", "s"], 0.5),
    (["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"],
     ["1", "2", "3", "4", "5", "6", "7", "8", "9", "x"], 0.9),
    (["a"] * 7, ["a"] * 5, 0.6122448979591837),
    (["cat", "sat", "mat"], ["mat", "sat", "cat"], 0.3333333333333333),
    (["u", "v"], ["x", "y", "z", "w"], 0.0),
    (["a", "b", "c", "d", "e", "f"], ["a", "b", "c"], 0.375),
    (["tok"] * 4, ["tok"] * 4 + ["extra"], 0.72),
]


def exact_position_match_similarity(x: list[str], y: list[str]) -> float:
    """Brute-force re-derivation with exact rational arithmetic."""
    if not x and not y:
        return 1.0
    length = max(len(x), len(y))
    matches = 0
    for position in range(min(len(x), len(y))):
        if x[position] == y[position]:
            matches += 1
    return float(
        Fraction(matches, length) * (1 - Fraction(abs(len(x) - len(y)), 2 * length))
    )


def test_criterion_1_minimality_fixture_suite():
    start = time.perf_counter()
    assert len(MINIMALITY_CASES) == 20
    ok = True
    for x, y, frozen in MINIMALITY_CASES:
        got = minimality_lexical(x, y)
        rederived = exact_position_match_similarity(x, y)
        ok = ok and abs(got - frozen) <= 1e-12 and abs(rederived - frozen) <= 1e-12
    elapsed = time.perf_counter() - start
    report(1, "position-match similarity fixture (20 cases, oracle re-derived)", ok, elapsed, 1)
    assert ok
    assert elapsed < 1.0


# -- criterion 2: consensus fixture ------------------------------------------

CONSENSUS_CASES = [
    # (crs, (label_b, conf_b), (label_c, conf_c), frozen expected, retained at 0.5)
    (1, ("AGREE", 1.0), ("AGREE", 1.0), 1.0, True),
    (1, ("PARTIAL", 0.8), ("DISAGREE", 0.6), 0.4666666666666667, False),
    (0, ("AGREE", 0.9), ("AGREE", 0.9), 0.6, True),
    (1, ("AGREE", 0.9), ("AGREE", 0.9), 0.9333333333333332, True),
    (0, ("DISAGREE", 1.0), ("DISAGREE", 1.0), 0.0, False),
    (1, ("DISAGREE", 1.0), ("DISAGREE", 1.0), 0.3333333333333333, False),
    (1, ("PARTIAL", 1.0), ("PARTIAL", 1.0), 0.6666666666666666, True),
    (0, ("PARTIAL", 0.5), ("AGREE", 0.25), 0.16666666666666666, False),
    (1, ("AGREE", 0.5), ("DISAGREE", 0.9), 0.5, True),  # boundary: retained
    (1, ("AGREE", 0.0), ("AGREE", 0.0), 0.3333333333333333, False),
    (0, ("AGREE", 1.0), ("PARTIAL", 1.0), 0.5, True),  # boundary from below crs
    (1, ("PARTIAL", 0.2), ("AGREE", 0.7), 0.6000000000000001, True),
]


def test_criterion_2_consensus_fixture_suite():
    start = time.perf_counter()
    assert len(CONSENSUS_CASES) == 12
    tau_c = 0.5
    ok = True
    for crs, (label_b, conf_b), (label_c, conf_c), frozen, retained in CONSENSUS_CASES:
        got = consensus_score(
            crs,
            [Critique("B", label_b, conf_b), Critique("C", label_c, conf_c)],
        )
        weights = {"AGREE": 1.0, "PARTIAL": 0.5, "DISAGREE": 0.0}
        rederived = (crs + conf_b * weights[label_b] + conf_c * weights[label_c]) / 3.0
        ok = ok and abs(got - frozen) <= 1e-12 and abs(rederived - frozen) <= 1e-12
        ok = ok and ((got >= tau_c) == retained)
    elapsed = time.perf_counter() - start
    report(2, "consensus fixture (12 cases incl. boundary 0.5 retained)", ok, elapsed, 1)
    assert ok
    assert elapsed < 1.0


# -- criterion 3: scoring-loop equivalence property ---------------------------


def test_criterion_3_early_break_equivalence_and_k_monotonicity():
    start = time.perf_counter()
    rng = random.Random(2024)
    ok = True
    for table_index in range(500):
        n = rng.randint(2, 7)
        k_max = rng.randint(1, 4)
        t = make_base_trace(n, trace_id=f"tbl-{table_index}")
        table = {
            (i, s): rng.random() < 0.3 for i in range(n - 1) for s in range(k_max)
        }
        verifier = table_verifier(table)
        fast = score_trace(t, TableProposer(), TableExecutor(), verifier,
                           k=k_max, early_break=True)
        full = score_trace(t, TableProposer(), TableExecutor(), verifier,
                           k=k_max, early_break=False)
        ok = ok and [s.crs for s in fast.scores] == [s.crs for s in full.scores]
        previous = None
        for k in range(1, k_max + 1):
            scores = [
                s.crs
                for s in score_trace(t, TableProposer(), TableExecutor(), verifier, k=k).scores
            ]
            if previous is not None:
                ok = ok and all(c >= p for c, p in zip(scores, previous))
            previous = scores
    elapsed = time.perf_counter() - start
    report(3, "early-break equivalence + K monotonicity over 500 verdict tables", ok, elapsed, 5)
    assert ok
    assert elapsed < 5.0


# -- criterion 4: published table reproduction --------------------------------


def test_criterion_4_reference_tables_reproduced_from_raw_counts():
    start = time.perf_counter()
    rows = load_reference_counts()
    ok = len(rows) == 16
    for row in rows:
        if row.failed:
            ok = ok and abs(100 * repair_rate(row.failed, row.repaired) - row.printed_rate_pct) <= 0.1
        before, after, delta = accuracy_delta(row.total, row.passed, row.net_repaired)
        ok = ok and abs(before - row.printed_before) <= 0.001
        ok = ok and abs(after - row.printed_after) <= 0.001
        ok = ok and abs(delta - row.printed_delta) <= 0.001
    causal = [r for r in rows if r.method == "causal_repair"]
    aggregate = repair_rate(sum(r.failed for r in causal), sum(r.repaired for r in causal))
    ok = ok and abs(100 * aggregate - 42.7) <= 0.1
    # spotlight cells named in the criterion
    ok = ok and abs(100 * repair_rate(330, 173) - 52.4) <= 0.1
    ok = ok and abs(accuracy_delta(1319, 989, 173)[2] - 0.131) <= 0.001
    ok = ok and abs(accuracy_delta(484, 149, 149)[2] - 0.308) <= 0.001
    elapsed = time.perf_counter() - start
    report(4, "all published repair-rate and accuracy cells within 0.1pp", ok, elapsed, 1)
    assert ok
    assert elapsed < 1.0


# -- criterion 5: Wilson intervals --------------------------------------------


def test_criterion_5_wilson_intervals_match_published_audit():
    start = time.perf_counter()
    low_a, high_a = wilson_interval(20, 22)
    low_b, high_b = wilson_interval(25, 29)
    ok = (
        abs(low_a - 0.722) <= 0.002
        and abs(high_a - 0.975) <= 0.002
        and abs(low_b - 0.694) <= 0.002
        and abs(high_b - 0.945) <= 0.002
    )
    elapsed = time.perf_counter() - start
    report(5, "Wilson 95% intervals for (20,22) and (25,29)", ok, elapsed, 1)
    assert ok
    assert elapsed < 1.0


# -- criterion 6: end-to-end synthetic ground truth ----------------------------


def test_criterion_6_end_to_end_synthetic_ground_truth(tmp_path, monkeypatch):
    start = time.perf_counter()

    def deny_network(*args, **kwargs):
        raise AssertionError("network access attempted during offline run")

    monkeypatch.setattr(socket, "socket", deny_network)

    outputs = []
    for arm in ("a", "b"):
        traces, records = generate_synthetic_suite(200, (5, 9), seed=7)
        corpus = tmp_path / f"corpus-{arm}"
        write_corpus(traces, corpus)
        faults = tmp_path / f"faults-{arm}.jsonl"
        write_fault_records(records, faults)
        out = run_pipeline(
            RunConfig(
                corpus_dir=str(corpus), faults_path=str(faults),
                out_dir=str(tmp_path / f"run-{arm}"), label="synthetic",
                workers=4, seed=7,
            )
        )
        outputs.append((out, records, sorted(p.read_bytes() for p in corpus.glob("*.json"))))

    (out_a, records, corpus_a), (out_b, _, corpus_b) = outputs
    ok = corpus_a == corpus_b  # generation is bit-reproducible
    for name in ("scoring.jsonl", "pairs.jsonl", "summary.csv", "summary.md", "run.log"):
        ok = ok and (out_a / name).read_bytes() == (out_b / name).read_bytes()

    recs = [json.loads(line) for line in (out_a / "scoring.jsonl").read_text().splitlines()]
    repaired = sum(1 for r in recs if r["status"] == "repaired")
    ok = ok and repaired == 200  # repair rate 100%

    expected = {r.trace_id: r.injected_step for r in records}
    exact_flags = 0
    for rec in recs:
        if rec["scoring"]["causal_steps"] == [expected[rec["trace_id"]]]:
            exact_flags += 1
        else:
            print(f"  audit: {rec['trace_id']} flagged {rec['scoring']['causal_steps']}, "
                  f"injected {expected[rec['trace_id']]}")
    ok = ok and exact_flags >= 0.99 * len(recs)

    pairs = read_pairs(out_a / "pairs.jsonl")
    mean_lexical = statistics.mean(p["minimality_lexical"] for p in pairs)
    ok = ok and mean_lexical >= 0.9

    elapsed = time.perf_counter() - start
    report(
        6,
        f"200-trace offline ground truth (repair {repaired}/200, "
        f"exact flags {exact_flags}/200, mean lexical {mean_lexical:.3f}, bit-reproducible)",
        ok, elapsed, 30,
    )
    assert ok
    assert elapsed < 30.0


# -- criterion 7: baseline contracts offline -----------------------------------


def test_criterion_7_baseline_contracts(tmp_path):
    start = time.perf_counter()
    task = TaskSpec(problem_statement="what is 6*13?", gold_answer="78", verifier_kind="numeric")

    stop_first = self_refine(task, ScriptedGateway(["fine\n[STOP]"]), max_iters=4,
                             initial_solution="72")
    never_stop = self_refine(
        task,
        ScriptedGateway(["fb1", "r1", "fb2", "r2", "fb3", "r3", "fb4", "r4"]),
        max_iters=4, initial_solution="72",
    )
    reflection_gw = ScriptedGateway(["structured reflection", "the answer is 78"])
    reflected = self_reflection(task, reflection_gw, "72",
                                verifier=lambda answer: verify(answer, task))
    ok = (
        stop_first.iterations_used == 1
        and never_stop.iterations_used == 4
        and reflection_gw.calls == 2
        and len(reflected.transcript) == 2
    )

    # direct over a failed corpus emits zero repairs and zero pairs
    traces, records = generate_synthetic_suite(5, (5, 6), seed=13)
    corpus = tmp_path / "corpus"
    write_corpus(traces, corpus)
    faults = tmp_path / "faults.jsonl"
    write_fault_records(records, faults)
    out = run_pipeline(
        RunConfig(corpus_dir=str(corpus), faults_path=str(faults),
                  out_dir=str(tmp_path / "run-direct"), method="direct", workers=1)
    )
    recs = [json.loads(line) for line in (out / "scoring.jsonl").read_text().splitlines()]
    ok = ok and sum(1 for r in recs if r["status"] == "repaired") == 0
    ok = ok and not (out / "pairs.jsonl").exists()

    elapsed = time.perf_counter() - start
    report(7, "baseline contracts: [STOP] halt, iteration cap, 2-call reflection, direct repairs 0",
           ok, elapsed, 2)
    assert ok
    assert elapsed < 2.0


# -- criterion 8: determinism and purity ---------------------------------------


def test_criterion_8_determinism_and_identity_interventions():
    start = time.perf_counter()
    traces, _ = generate_synthetic_suite(100, (5, 7), seed=17)
    ok = True

    # repeating verification and re-execution five times is bit-identical
    probe = traces[0]
    prefix = substitute_step(probe, 1, probe.steps[1].payload)
    seen = set()
    for _ in range(5):
        rt = reexecute_suffix(prefix, probe.task, DeterministicReplayExecutor(probe))
        verdict = verify_trace(rt.trace)
        seen.add((tuple(s.payload for s in rt.trace.steps), verdict.success, verdict.detail))
    ok = ok and len(seen) == 1

    # identity interventions preserve the verdict at every candidate step
    checked = 0
    for t in traces:
        original_verdict = verify_trace(t).success
        executor = DeterministicReplayExecutor(t)
        for i in range(len(t.steps) - 1):
            identity_prefix = substitute_step(t, i, t.steps[i].payload)
            rt = reexecute_suffix(identity_prefix, t.task, executor)
            if verify_trace(rt.trace).success != original_verdict:
                ok = False
            checked += 1
    elapsed = time.perf_counter() - start
    report(8, f"determinism x5 and {checked} identity interventions on 100 traces",
           ok, elapsed, 10)
    assert ok
    assert elapsed < 10.0


# -- criterion 9: trace format round-trip --------------------------------------


def test_criterion_9_round_trip_and_violation_detection():
    start = time.perf_counter()
    rng = random.Random(23)
    ok = True
    for i in range(1000):
        t = random_valid_trace(rng, f"rt-{i}")
        ok = ok and parse_trace(serialize_trace(t)) == t

    base = build_trace(
        [
            (StepType.REASONING, "r"),
            (StepType.TOOL_CALL, "calc\n1+1"),
            (StepType.FINAL_ANSWER, "2"),
        ]
    )

    def violates(trace: Trace, fragment: str) -> bool:
        return any(fragment in v for v in validate_trace(trace))

    gapped = Trace(base.trace_id, base.task,
                   (base.steps[0], Step(5, StepType.FINAL_ANSWER, "2")))
    forward = Trace(base.trace_id, base.task,
                    (Step(0, StepType.REASONING, "r", deps=(1,)), base.steps[1].__class__(
                        1, StepType.FINAL_ANSWER, "2")))
    empty_payload = build_trace([(StepType.REASONING, ""), (StepType.FINAL_ANSWER, "2")])
    double_final = build_trace([(StepType.FINAL_ANSWER, "2"), (StepType.FINAL_ANSWER, "2")])
    misplaced_final = build_trace([(StepType.FINAL_ANSWER, "2"), (StepType.REASONING, "r")])
    missing_tests = build_trace(
        [(StepType.FINAL_ANSWER, "code")],
        task=TaskSpec(problem_statement="p", verifier_kind="program_tests"),
    )

    ok = ok and violates(gapped, "dense")
    ok = ok and violates(forward, "forward dependency")
    ok = ok and violates(empty_payload, "empty payload")
    ok = ok and violates(double_final, "multiple final_answer")
    ok = ok and violates(misplaced_final, "not the last step")
    ok = ok and violates(missing_tests, "non-empty test list")

    elapsed = time.perf_counter() - start
    report(9, "1000-trace serialize/parse round-trip + all violation classes detected",
           ok, elapsed, 5)
    assert ok
    assert elapsed < 5.0
