"""Binary stance evaluation with explicit abstention handling.

Predictions are compared per user against gold labels.  Users the
pipeline left Unassigned are excluded from the 2x2 confusion matrix and
tracked separately; coverage reports the assigned fraction.  All metric
values live on the percent scale and are rounded to one decimal only
when written out.
"""

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .cluster import UNASSIGNED

MEASURES = ("accuracy", "precision", "recall", "f1", "coverage")

REPORT_CSV_HEADER = ("topic", "method", "condition", "A", "P", "R", "F",
                     "coverage", "n_test", "n_unassigned")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (2, 2) int64, rows gold, columns predicted
    unassigned: int

    @property
    def total_assigned(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    coverage: float


@dataclass(frozen=True)
class ReportRow:
    topic: str
    method: str
    condition: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    coverage: float
    n_test: int
    n_unassigned: int


def confusion(pred: dict[str, int], gold: dict[str, int]) -> ConfusionMatrix:
    """Tally predictions against gold labels.

    Users missing from pred, or predicted UNASSIGNED, count as unassigned.
    A prediction for a user without a gold label is an error.
    """
    extra = set(pred) - set(gold)
    if extra:
        raise ValueError(f"predictions for users without gold labels: {sorted(extra)[:5]}")
    counts = np.zeros((2, 2), dtype=np.int64)
    unassigned = 0
    for uid, gold_label in gold.items():
        if gold_label not in (0, 1):
            raise ValueError(f"gold label for {uid!r} must be 0 or 1, got {gold_label}")
        predicted = pred.get(uid, UNASSIGNED)
        if predicted == UNASSIGNED:
            unassigned += 1
        elif predicted in (0, 1):
            counts[gold_label, predicted] += 1
        else:
            raise ValueError(f"prediction for {uid!r} must be 0, 1 or UNASSIGNED, got {predicted}")
    return ConfusionMatrix(counts=counts, unassigned=unassigned)


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, macro precision/recall/F over assigned users, plus coverage.

    Per-class ratios with empty denominators are 0.  Macro F averages the
    per-class F1 scores (it is not the harmonic mean of macro precision
    and macro recall).  Values are percentages.
    """
    total = cm.total_assigned
    if total == 0:
        raise ValueError("no assigned predictions; metrics are undefined")
    counts = cm.counts
    per_class_p = [_safe_div(counts[c, c], counts[:, c].sum()) for c in (0, 1)]
    per_class_r = [_safe_div(counts[c, c], counts[c, :].sum()) for c in (0, 1)]
    per_class_f = [_safe_div(2 * p * r, p + r) for p, r in zip(per_class_p, per_class_r)]
    accuracy = (counts[0, 0] + counts[1, 1]) / total
    coverage = total / (total + cm.unassigned)
    return MetricsReport(accuracy=100.0 * accuracy,
                         precision=100.0 * float(np.mean(per_class_p)),
                         recall=100.0 * float(np.mean(per_class_r)),
                         f1=100.0 * float(np.mean(per_class_f)),
                         coverage=100.0 * coverage)


def summarize(reports) -> tuple[dict[str, float], dict[str, float]]:
    """Per-measure mean and population standard deviation (percent scale)."""
    if not reports:
        raise ValueError("nothing to summarize")
    means = {}
    std_devs = {}
    for measure in MEASURES:
        values = np.array([getattr(r, measure) for r in reports], dtype=np.float64)
        means[measure] = float(values.mean())
        std_devs[measure] = float(values.std())  # population form, divides by N
    return means, std_devs


def format_percent(value: float) -> str:
    return f"{value:.1f}"


def write_report_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_CSV_HEADER)
        for row in rows:
            writer.writerow([row.topic, row.method, row.condition,
                             format_percent(row.accuracy), format_percent(row.precision),
                             format_percent(row.recall), format_percent(row.f1),
                             format_percent(row.coverage), row.n_test, row.n_unassigned])


def read_report_csv(path) -> list[ReportRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != REPORT_CSV_HEADER:
            raise ValueError(f"unexpected report header {header!r}")
        for record in reader:
            topic, method, condition, a, p, r, f, cov, n_test, n_unassigned = record
            rows.append(ReportRow(topic=topic, method=method, condition=condition,
                                  accuracy=float(a), precision=float(p), recall=float(r),
                                  f1=float(f), coverage=float(cov),
                                  n_test=int(n_test), n_unassigned=int(n_unassigned)))
    return rows


def write_report_json(rows, path) -> None:
    payload = []
    for row in rows:
        record = asdict(row)
        for measure in MEASURES:
            record[measure] = round(record[measure], 1)
        payload.append(record)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def write_predictions_tsv(predictions: dict[str, int], path) -> None:
    """One `user_id<TAB>label` row per user, -1 marking Unassigned."""
    with open(path, "w", encoding="utf-8") as handle:
        for user_id in sorted(predictions):
            handle.write(f"{user_id}\t{predictions[user_id]}\n")


def read_predictions_tsv(path) -> dict[str, int]:
    predictions: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1", str(UNASSIGNED)):
                raise ValueError(f"{path}:{lineno}: expected user_id<TAB>label "
                                 f"with label 0, 1 or {UNASSIGNED}")
            user_id, label = parts
            if user_id in predictions and predictions[user_id] != int(label):
                raise ValueError(f"{path}:{lineno}: conflicting labels for {user_id!r}")
            predictions[user_id] = int(label)
    return predictions
