"""Minimality scoring, repair selection and contrastive-pair emission.

Two similarity metrics rank successful interventions against the original
step: position-wise token matching with a length penalty, and normalized
token-level edit distance.  The selected repair becomes a (wrong, repaired)
supervision record in the line-delimited dataset.
"""

from __future__ import annotations

import json
import threading
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .crs_engine import StepScore
from .proposal import Proposal
from .trace_model import Trace


def tokenize(text: str) -> list[str]:
    """NFC-normalize, then split on Unicode whitespace.

    Punctuation stays attached to its word; there is no sub-word splitting,
    so minimality scores are stable across formatting-only changes.
    """
    return unicodedata.normalize("NFC", text).split()


def minimality_lexical(x: list[str], y: list[str]) -> float:
    """Position-wise token similarity with a length penalty, in [0, 1].

    (m/L) * (1 - |len(x)-len(y)| / 2L) with L = max length and m the count
    of positions (up to the shorter length) where tokens agree.  Two empty
    sequences score 1: an empty-to-empty edit has zero size.
    """
    if not x and not y:
        return 1.0
    length = max(len(x), len(y))
    matches = sum(1 for a, b in zip(x, y) if a == b)
    return (matches / length) * (1.0 - abs(len(x) - len(y)) / (2.0 * length))


def levenshtein_tokens(x: list[str], y: list[str]) -> int:
    """Token-level edit distance (insert/delete/substitute, unit costs)."""
    if not x:
        return len(y)
    if not y:
        return len(x)
    previous = list(range(len(y) + 1))
    for row, a in enumerate(x, start=1):
        current = [row] + [0] * len(y)
        for col, b in enumerate(y, start=1):
            current[col] = min(
                previous[col] + 1,
                current[col - 1] + 1,
                previous[col - 1] + (a != b),
            )
        previous = current
    return previous[-1]


def minimality_edit(x: list[str], y: list[str]) -> float:
    """1 - normalized token edit distance; empty-vs-empty scores 1."""
    if not x and not y:
        return 1.0
    return 1.0 - levenshtein_tokens(x, y) / max(len(x), len(y))


@dataclass(frozen=True)
class MinimalityScore:
    lexical: float
    edit: float
    tokens_original: int
    tokens_repair: int


def score_minimality(original: str, repaired: str) -> MinimalityScore:
    x = tokenize(original)
    y = tokenize(repaired)
    return MinimalityScore(
        lexical=minimality_lexical(x, y),
        edit=minimality_edit(x, y),
        tokens_original=len(x),
        tokens_repair=len(y),
    )


METRICS = ("lexical", "edit")


def select_repair(
    score: StepScore, metric: str = "lexical"
) -> tuple[Proposal, MinimalityScore] | None:
    """The successful intervention most similar to the original payload.

    Ties break on the other metric (higher wins), then on the lower sample
    index.  Returns None when the step had no successful intervention.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown minimality metric {metric!r}")
    best: tuple[float, float, int, Proposal, MinimalityScore] | None = None
    for proposal, _rt, _verdict in score.successful_interventions:
        m = score_minimality(score.original_payload, proposal.payload)
        primary = getattr(m, metric)
        secondary = m.edit if metric == "lexical" else m.lexical
        key = (primary, secondary, -proposal.sample_index)
        if best is None or key > (best[0], best[1], best[2]):
            best = (primary, secondary, -proposal.sample_index, proposal, m)
    if best is None:
        return None
    return best[3], best[4]


@dataclass(frozen=True)
class ContrastivePair:
    trace_id: str
    step_index: int
    wrong_payload: str
    repaired_payload: str
    minimality: MinimalityScore
    consensus: float | None
    verifier_mode: str


class PairWriter:
    """Serialized, idempotent appender for the supervision dataset.

    One JSON record per line with a stable field order; duplicate
    (trace_id, step_index, repaired_payload) emissions are stored once.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seen: set[tuple[str, int, str]] = set()
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._seen.add((rec["trace_id"], rec["step_index"], rec["repaired"]))

    def emit(self, pair: ContrastivePair) -> bool:
        """Append one pair; returns False when it was already stored."""
        key = (pair.trace_id, pair.step_index, pair.repaired_payload)
        record = {
            "trace_id": pair.trace_id,
            "step_index": pair.step_index,
            "wrong": pair.wrong_payload,
            "repaired": pair.repaired_payload,
            "minimality_lexical": pair.minimality.lexical,
            "minimality_edit": pair.minimality.edit,
            "consensus": pair.consensus,
            "verifier_mode": pair.verifier_mode,
        }
        with self._lock:
            if key in self._seen:
                return False
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                fh.flush()
            self._seen.add(key)
        return True


def emit_pair(
    writer: PairWriter,
    t: Trace,
    step_index: int,
    repair: Proposal,
    minimality: MinimalityScore,
    consensus: float | None = None,
) -> ContrastivePair:
    """Record one validated repair as a contrastive supervision pair."""
    verifier_mode = "predictive" if t.task.verifier_kind == "predictive" else "deterministic"
    pair = ContrastivePair(
        trace_id=t.trace_id,
        step_index=step_index,
        wrong_payload=t.steps[step_index].payload,
        repaired_payload=repair.payload,
        minimality=minimality,
        consensus=consensus,
        verifier_mode=verifier_mode,
    )
    writer.emit(pair)
    return pair


def read_pairs(path: str | Path) -> list[dict]:
    """Load the supervision dataset back as dict records."""
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records
