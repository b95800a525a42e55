"""Open-world evaluation metrics and prediction-record I/O.

A record captures one test sample at one evaluation pass: where it came
from, whether its class was trained yet (open marker), the detect outcome,
the radius-bypassed nearest-known-centroid prediction, and the continuous
openness score. Accuracy has two modes:

- closed: detection is bypassed; the nearest-centroid prediction must match.
- open-world: the detect outcome must match, so a known sample flagged
  unknown counts as an error. Open samples enter the average only when
  predicted as a pseudo class whose eventual promotion maps onto their true
  class; other open samples are neutral.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParseError, UsageError

RECORDS_HEADER = "task,true,predicted,score"

_OPEN_TRUE_PREFIX = "open:"


@dataclass(frozen=True)
class PredictionRecord:
    task: int  # episode the sample came from
    true_label: int
    is_open: bool  # class untrained at evaluation time
    predicted: int | None  # detect outcome: class id, pseudo id (< 0), None=unknown
    closed_predicted: int | None  # nearest known centroid, radius ignored
    score: float  # openness w.r.t. known spheres


def accuracy(records, mode: str = "closed", promotions=None) -> float:
    """Known-classification accuracy; see the module docstring for modes."""
    if mode not in ("closed", "open-world"):
        raise UsageError(f"mode must be closed or open-world, got {mode!r}")
    promotions = promotions or {}
    num = 0
    den = 0
    for r in records:
        if not r.is_open:
            if mode == "closed":
                if r.closed_predicted is None:
                    raise UsageError("closed predictions unavailable in these records")
                num += r.closed_predicted == r.true_label
            else:
                num += r.predicted == r.true_label
            den += 1
        elif mode == "open-world" and r.predicted is not None and r.predicted < 0:
            if promotions.get(r.predicted) == r.true_label:
                num += 1
                den += 1
    if den == 0:
        raise DegenerateInputError("accuracy over zero known-class records")
    return num / den


def _split_scores(records):
    known = np.array([r.score for r in records if not r.is_open], dtype=float)
    opens = np.array([r.score for r in records if r.is_open], dtype=float)
    if known.size == 0 or opens.size == 0:
        raise DegenerateInputError("need at least one known and one open record")
    return known, opens


def auroc(records) -> float:
    """Probability a random open sample outscores a random known one, ties half.

    Rank (Mann-Whitney) formulation with average ranks over ties; exactly the
    mean over all (open, known) pairs of 1, 1/2 or 0.
    """
    known, opens = _split_scores(records)
    scores = np.concatenate([known, opens])
    vals, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    preceding = np.concatenate([[0], np.cumsum(counts)])[:-1]
    avg_rank = preceding + (counts + 1) / 2.0  # 1-based
    ranks = avg_rank[inverse]
    n_known = known.size
    n_open = opens.size
    u = ranks[n_known:].sum() - n_open * (n_open + 1) / 2.0
    return float(u / (n_open * n_known))


def fpr_at_tpr(records, tpr_target: float = 0.95) -> float:
    """False-positive rate at the loosest threshold reaching the target recall.

    Opens are the positives. tau is the largest threshold with at least
    tpr_target of the opens scoring >= tau; returns the fraction of knowns
    scoring >= tau.
    """
    if not 0.0 < tpr_target <= 1.0:
        raise UsageError(f"tpr_target must lie in (0, 1], got {tpr_target}")
    known, opens = _split_scores(records)
    k = int(np.ceil(tpr_target * opens.size))
    tau = np.sort(opens)[::-1][k - 1]
    return float(np.mean(known >= tau))


@dataclass(frozen=True)
class PassReport:
    """Metrics of one evaluation pass. auroc/fpr are None without both
    classes; acc_closed is None when the records lack the closed column."""

    acc_closed: float | None
    acc_open_world: float
    auroc: float | None
    fpr: float | None


def pass_report(records, promotions=None, tpr_target: float = 0.95) -> PassReport:
    try:
        auc = auroc(records)
        fpr = fpr_at_tpr(records, tpr_target)
    except DegenerateInputError:
        auc = None
        fpr = None
    try:
        acc_closed = accuracy(records, "closed")
    except UsageError:
        acc_closed = None
    return PassReport(
        acc_closed=acc_closed,
        acc_open_world=accuracy(records, "open-world", promotions),
        auroc=auc,
        fpr=fpr,
    )


@dataclass(frozen=True)
class MetricsReport:
    mode: str
    tpr_target: float
    acc_per_task: list
    acc_mean: float  # ACC_N
    pd: float  # first-task accuracy minus final-task accuracy
    auroc_per_task: list
    auroc_mean: float | None  # AUC_N
    fpr_per_task: list
    fpr_mean: float | None  # FPR_N
    open_world_acc: float


def aggregate(
    per_pass_records,
    mode: str = "closed",
    promotions=None,
    tpr_target: float = 0.95,
) -> MetricsReport:
    """Fold per-pass records (index = evaluation task) into one report.

    Accuracy means average over passes; the drop rate is first-pass minus
    final-pass accuracy. Passes without open samples contribute no AUROC/FPR
    and are skipped in those averages.
    """
    if not per_pass_records:
        raise UsageError("no evaluation passes: task 0 is missing")
    reports = [pass_report(recs, promotions, tpr_target) for recs in per_pass_records]
    if mode == "closed":
        accs = [r.acc_closed for r in reports]
        if any(a is None for a in accs):
            raise UsageError("closed predictions unavailable in these records")
    elif mode == "open-world":
        accs = [r.acc_open_world for r in reports]
    else:
        raise UsageError(f"mode must be closed or open-world, got {mode!r}")
    aurocs = [r.auroc for r in reports]
    fprs = [r.fpr for r in reports]
    defined_auc = [a for a in aurocs if a is not None]
    defined_fpr = [f for f in fprs if f is not None]
    return MetricsReport(
        mode=mode,
        tpr_target=tpr_target,
        acc_per_task=accs,
        acc_mean=float(np.mean(accs)),
        pd=accs[0] - accs[-1],
        auroc_per_task=aurocs,
        auroc_mean=float(np.mean(defined_auc)) if defined_auc else None,
        fpr_per_task=fprs,
        fpr_mean=float(np.mean(defined_fpr)) if defined_fpr else None,
        open_world_acc=float(np.mean([r.acc_open_world for r in reports])),
    )


# -- text renderings ---------------------------------------------------------


def render_report(report: MetricsReport) -> str:
    """Key/value text with a fixed key order, for golden-file comparison."""
    pairs = [
        ("mode", report.mode),
        ("tpr_target", report.tpr_target),
        ("acc_per_task", report.acc_per_task),
        ("ACC_N", report.acc_mean),
        ("PD", report.pd),
        ("auroc_per_task", report.auroc_per_task),
        ("AUC_N", report.auroc_mean),
        ("fpr_per_task", report.fpr_per_task),
        ("FPR_N", report.fpr_mean),
        ("open_world_acc", report.open_world_acc),
    ]
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in pairs)


def _render_true(record: PredictionRecord) -> str:
    if record.is_open:
        return f"{_OPEN_TRUE_PREFIX}{record.true_label}"
    return str(record.true_label)


def render_prediction(predicted: int | None) -> str:
    if predicted is None:
        return "unknown"
    if predicted < 0:
        return f"open-{-predicted}"
    return str(predicted)


def parse_prediction(text: str) -> int | None:
    if text == "unknown":
        return None
    if text.startswith("open-"):
        return -int(text[len("open-") :])
    return int(text)


def write_records(path, records, closed: bool = False) -> None:
    """Write records as ``task,true,predicted,score`` CSV rows.

    With ``closed=True`` the predicted column carries the radius-bypassed
    nearest-centroid prediction instead of the detect outcome.
    """
    with open(path, "w", newline="\n") as fh:
        fh.write(RECORDS_HEADER + "\n")
        for r in records:
            pred = r.closed_predicted if closed else r.predicted
            fh.write(
                f"{r.task},{_render_true(r)},{render_prediction(pred)},{repr(float(r.score))}\n"
            )


def read_records(path, closed: bool = False) -> list[PredictionRecord]:
    """Inverse of :func:`write_records`; the column the file does not carry
    is left as None."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != RECORDS_HEADER:
        raise ParseError(f"records CSV must start with {RECORDS_HEADER!r}", line=1)
    records = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 4 columns, got {len(parts)}", line=lineno)
        try:
            task = int(parts[0])
            truth = parts[1]
            if truth.startswith(_OPEN_TRUE_PREFIX):
                is_open = True
                true_label = int(truth[len(_OPEN_TRUE_PREFIX) :])
            else:
                is_open = False
                true_label = int(truth)
            pred = parse_prediction(parts[2])
            score = float(parts[3])
        except ValueError as exc:
            raise ParseError(f"bad value in records row: {exc}", line=lineno) from exc
        records.append(
            PredictionRecord(
                task=task,
                true_label=true_label,
                is_open=is_open,
                predicted=None if closed else pred,
                closed_predicted=pred if closed else None,
                score=score,
            )
        )
    return records


def merge_closed(records, closed_records) -> list[PredictionRecord]:
    """Fill the closed_predicted column from the companion closed-mode file."""
    if len(records) != len(closed_records):
        raise UsageError("records and closed records disagree on length")
    merged = []
    for r, c in zip(records, closed_records):
        if (r.task, r.true_label, r.is_open) != (c.task, c.true_label, c.is_open):
            raise UsageError("records and closed records are not aligned")
        merged.append(
            PredictionRecord(
                task=r.task,
                true_label=r.true_label,
                is_open=r.is_open,
                predicted=r.predicted,
                closed_predicted=c.closed_predicted,
                score=r.score,
            )
        )
    return merged
