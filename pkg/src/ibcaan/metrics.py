"""Equal error rate and score files.

Scores follow the anti-spoofing convention: higher means more bonafide.
For a threshold ``t``

* FAR(t) = fraction of spoof trials with score >= t (falsely accepted),
* FRR(t) = fraction of bonafide trials with score < t (falsely rejected).

The EER sweeps ``t`` over every distinct score, keeps the threshold that
minimises ``|FAR - FRR|`` (ties: smaller ``FAR + FRR``), and reports
``(FAR + FRR) / 2`` there.  Selection uses exact integer arithmetic and the
final value is a single correctly rounded division, so the result is
reproducible to the last bit.  Compared with ROC convex-hull interpolation
this can differ by at most one trial's probability mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError

BONAFIDE = "bonafide"
SPOOF = "spoof"


@dataclass(frozen=True)
class ScoreRecord:
    trial_id: str
    score: float
    label: str  # "bonafide" or "spoof"


def eer_from_scores(bona_scores, spoof_scores) -> float:
    bona = np.asarray(bona_scores, dtype=np.float64).reshape(-1)
    spoof = np.asarray(spoof_scores, dtype=np.float64).reshape(-1)
    nb, ns = bona.size, spoof.size
    if nb == 0 or ns == 0:
        raise ValueError("EER needs at least one bonafide and one spoof score")

    thresholds = np.unique(np.concatenate([bona, spoof]))
    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    # a: spoof with score >= t, b: bonafide with score < t
    a = ns - np.searchsorted(spoof_sorted, thresholds, side="left")
    b = np.searchsorted(bona_sorted, thresholds, side="left")
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    diff = np.abs(a * nb - b * ns)
    total = a * nb + b * ns
    best = np.lexsort((total, diff))[0]
    return (int(a[best]) * nb + int(b[best]) * ns) / (2 * ns * nb)


def compute_eer(records: Iterable[ScoreRecord]) -> float:
    records = list(records)
    bona = [r.score for r in records if r.label == BONAFIDE]
    spoof = [r.score for r in records if r.label == SPOOF]
    if len(bona) + len(spoof) != len(records):
        raise ValueError("record labels must be 'bonafide' or 'spoof'")
    if not bona or not spoof:
        raise ValueError("EER needs records of both labels")
    return eer_from_scores(bona, spoof)


def records_from_arrays(scores, y, prefix: str = "trial") -> list[ScoreRecord]:
    """Build records from scores and dataset labels (0 bonafide, 1 spoof)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(y).reshape(-1)
    return [
        ScoreRecord(f"{prefix}-{i:06d}", float(s), SPOOF if lab == 1 else BONAFIDE)
        for i, (s, lab) in enumerate(zip(scores, y))
    ]


def write_scores(records: Sequence[ScoreRecord], path) -> None:
    seen = set()
    lines = []
    for r in records:
        if r.trial_id in seen:
            raise DataError(f"duplicate trial id {r.trial_id!r}")
        if "\t" in r.trial_id or "\n" in r.trial_id:
            raise DataError(f"trial id {r.trial_id!r} contains a tab or newline")
        seen.add(r.trial_id)
        lines.append(f"{r.trial_id}\t{r.score:.17g}\t{r.label}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_scores(path) -> list[ScoreRecord]:
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            trial_id, score, label = parts
            try:
                value = float(score)
            except ValueError:
                raise ParseError(path, lineno, f"bad score {score!r}") from None
            if label not in (BONAFIDE, SPOOF):
                raise ParseError(path, lineno, f"label must be bonafide or spoof, got {label!r}")
            if trial_id in seen:
                raise ParseError(path, lineno, f"duplicate trial id {trial_id!r}")
            seen.add(trial_id)
            records.append(ScoreRecord(trial_id, value, label))
    if not records:
        raise ParseError(path, None, "no records")
    return records
