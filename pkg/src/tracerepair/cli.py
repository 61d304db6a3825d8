"""Command-line entry point.

Subcommands: synth, validate, score, repair, baseline, report.
Exit codes: 0 success, 1 usage error, 2 partial failures, 3 fatal error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from .gateway import GatewayConfig
from .execution import SandboxConfig
from .harness import (
    DEFAULT_FAULT_MIX,
    RunConfig,
    generate_synthetic_suite,
    ingest_corpus,
    run_pipeline,
    write_corpus,
    write_fault_records,
)
from .metrics_report import (
    accuracy_delta,
    load_reference_counts,
    parse_report_csv,
    render_report,
    repair_rate,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="Directory of trace documents")
    p.add_argument("--faults", default=None, help="Fault-record file for ground-truth runs")
    p.add_argument("--out", required=True, help="Run directory")
    p.add_argument("--label", default="corpus", help="Corpus label used in reports")
    p.add_argument("--k", type=int, default=3, help="Proposals per candidate step")
    p.add_argument("--no-early-break", action="store_true",
                   help="Evaluate all K proposals per step (full pool for minimality ranking)")
    p.add_argument("--stop-after-first-causal-step", action="store_true",
                   help="Stop scanning a trace once one causal step is found")
    p.add_argument("--metric", choices=("lexical", "edit"), default="lexical")
    p.add_argument("--no-gold", action="store_true",
                   help="Withhold the gold answer from intervention prompts")
    p.add_argument("--tau-c", type=float, default=0.5, help="Consensus retention threshold")
    p.add_argument("--force-consensus", action="store_true",
                   help="Apply the consensus gate to deterministic verifiers too")
    p.add_argument("--budget-cap", type=int, default=150,
                   help="Max proposal evaluations per trace")
    p.add_argument("--proposer", choices=("auto", "rule_mutator", "gateway"), default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--stub-dir", default=None, help="Directory of canned gateway replies")
    p.add_argument("--config", default=None, help="INI config file")


def build_parser() -> _Parser:
    parser = _Parser(prog="tracerepair", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Generate a fault-injected synthetic corpus")
    synth.add_argument("--count", type=int, default=200)
    synth.add_argument("--depth-min", type=int, default=5)
    synth.add_argument("--depth-max", type=int, default=9)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="Corpus directory to create")
    synth.add_argument("--faults", default=None,
                       help="Fault-record output path (default: <out>/faults.jsonl)")

    val = sub.add_parser("validate", help="Validate every trace document in a corpus")
    val.add_argument("--corpus", required=True)

    for name, help_text in (
        ("score", "Causal scoring only (no supervision pairs)"),
        ("repair", "Full pipeline: score, select repairs, gate, emit pairs"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        _add_run_flags(cmd)

    base = sub.add_parser("baseline", help="Run a whole-answer refinement baseline")
    _add_run_flags(base)
    base.add_argument("--method", choices=("direct", "self_refine", "self_reflection"),
                      required=True)

    rep = sub.add_parser("report", help="Render result tables")
    rep.add_argument("--run", action="append", default=[],
                     help="Run directory (repeatable; summaries are merged)")
    rep.add_argument("--reference", action="store_true",
                     help="Recompute the shipped reference-counts table")
    rep.add_argument("--judge-audit", default=None,
                     help="CSV of label,precision rows; adds the adjusted-rate column")
    return parser


def _load_ini(path: str | None) -> configparser.ConfigParser:
    ini = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise _UsageError(f"config file {path} not found")
        ini.read(path, encoding="utf-8")
    return ini


def _gateway_from_ini(ini: configparser.ConfigParser) -> GatewayConfig | None:
    if not ini.has_section("gateway"):
        return None
    section = ini["gateway"]
    return GatewayConfig(
        endpoint=section.get("endpoint", GatewayConfig.endpoint),
        model=section.get("model", GatewayConfig.model),
        temperature=section.getfloat("temperature", GatewayConfig.temperature),
        max_retries=section.getint("max_retries", GatewayConfig.max_retries),
        timeout=section.getfloat("timeout", GatewayConfig.timeout),
        cache_dir=section.get("cache_dir", None),
        rate_limit=section.getint("rate_limit", GatewayConfig.rate_limit),
    )


def _run_config_from_args(args: argparse.Namespace, method: str, emit_pairs: bool) -> RunConfig:
    ini = _load_ini(args.config)
    sandbox = SandboxConfig(
        backend=ini.get("sandbox", "backend", fallback="subprocess"),
        interpreter=ini.get("sandbox", "interpreter", fallback=sys.executable),
    )
    prompts = dict(ini["prompts"]) if ini.has_section("prompts") else {}
    return RunConfig(
        corpus_dir=args.corpus,
        faults_path=args.faults,
        label=args.label,
        method=method,
        k=args.k,
        early_break=not args.no_early_break,
        stop_after_first_causal_step=args.stop_after_first_causal_step,
        metric=args.metric,
        prompt_variant="no_gold" if args.no_gold else "with_gold",
        tau_c=args.tau_c,
        force_consensus=args.force_consensus,
        budget_cap=args.budget_cap,
        proposer=args.proposer,
        gateway=_gateway_from_ini(ini),
        stub_dir=args.stub_dir,
        sandbox=sandbox,
        prompt_templates=prompts,
        out_dir=args.out,
        workers=args.workers,
        seed=args.seed,
        emit_pairs=emit_pairs,
    )


def _cmd_synth(args: argparse.Namespace) -> int:
    traces, records = generate_synthetic_suite(
        count=args.count,
        depth_range=(args.depth_min, args.depth_max),
        fault_mix=DEFAULT_FAULT_MIX,
        seed=args.seed,
    )
    out = write_corpus(traces, args.out)
    faults_path = args.faults or str(Path(args.out) / "faults.jsonl")
    write_fault_records(records, faults_path)
    print(f"wrote {len(traces)} traces to {out} and {len(records)} fault records to {faults_path}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    corpus = ingest_corpus(args.corpus)
    for name, reason in corpus.invalid:
        print(f"INVALID {name}: {reason}")
    print(f"{len(corpus.traces)} valid, {len(corpus.invalid)} invalid")
    return 2 if corpus.invalid else 0


def _cmd_run(args: argparse.Namespace, method: str, emit_pairs: bool) -> int:
    config = _run_config_from_args(args, method, emit_pairs)
    out = run_pipeline(config)
    records = [
        json.loads(line)
        for line in (out / "scoring.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    errors = sum(1 for r in records if r["status"] == "error")
    repaired = sum(1 for r in records if r["status"] == "repaired")
    print(f"run complete: {len(records)} traces, {repaired} repaired, {errors} errors -> {out}")
    print((out / "summary.md").read_text(encoding="utf-8"))
    return 2 if errors else 0


def _reference_summary_table() -> str:
    rows = load_reference_counts()
    lines = ["| Label | Method | Fail | Repairs (%) | Before | After | Delta |",
             "|---|---|---|---|---|---|---|"]
    for r in rows:
        rate = 0.0 if r.repaired == 0 else repair_rate(r.failed, r.repaired)
        before, after, delta = accuracy_delta(r.total, r.passed, r.net_repaired)
        lines.append(
            f"| {r.label} | {r.method} | {r.failed} | {r.repaired} ({100 * rate:.1f}) "
            f"| {before:.3f} | {after:.3f} | {delta:+.3f} |"
        )
    total_failed = sum(r.failed for r in rows if r.method == "causal_repair")
    total_repaired = sum(r.repaired for r in rows if r.method == "causal_repair")
    lines.append(
        f"| aggregate | causal_repair | {total_failed} | {total_repaired} "
        f"({100 * repair_rate(total_failed, total_repaired):.1f}) |  |  |  |"
    )
    return "\n".join(lines)


def _cmd_report(args: argparse.Namespace) -> int:
    if args.reference:
        print(_reference_summary_table())
        return 0
    if not args.run:
        raise _UsageError("report needs --run or --reference")
    summaries = []
    for run_dir in args.run:
        csv_path = Path(run_dir) / "summary.csv"
        if not csv_path.exists():
            raise FileNotFoundError(f"{csv_path} not found; is {run_dir} a run directory?")
        summaries.extend(parse_report_csv(csv_path.read_text(encoding="utf-8")))
    judge = None
    if args.judge_audit:
        judge = {}
        for line in Path(args.judge_audit).read_text(encoding="utf-8").splitlines()[1:]:
            if line.strip():
                label, precision = line.split(",")[:2]
                judge[label] = float(precision)
    report = render_report(summaries, judge_precision=judge)
    print(report.markdown)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "score":
            return _cmd_run(args, "causal_repair", emit_pairs=False)
        if args.command == "repair":
            return _cmd_run(args, "causal_repair", emit_pairs=True)
        if args.command == "baseline":
            return _cmd_run(args, args.method, emit_pairs=False)
        if args.command == "report":
            return _cmd_report(args)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"fatal: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
