"""Confusion-matrix bookkeeping and the classification report format.

All rates derive from the one-vs-rest view of a [true, predicted] count
matrix: TP on the diagonal, FN along the row, FP along the column, TN
everywhere else. Undefined rates (0/0) are carried as None, rendered "n/a",
and excluded from macro means with the exclusion counted. Percentages are
rounded to two decimals with ties away from zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
import json

import numpy as np

from .errors import InputError

Array = np.ndarray

from .pipeline import AAMI_CLASSES

NUM_CLASSES = len(AAMI_CLASSES)
_REPORT_VERSION = 1


class ConfusionMatrix:
    """Accumulates true/predicted label pairs into a count matrix."""

    def __init__(self, counts: Array | None = None):
        if counts is None:
            self.counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (NUM_CLASSES, NUM_CLASSES) or (counts < 0).any():
                raise InputError(
                    f"confusion matrix must be non-negative [{NUM_CLASSES}, {NUM_CLASSES}]")
            self.counts = counts.copy()

    def update(self, true_labels: Array, predicted: Array) -> None:
        t = np.asarray(true_labels)
        p = np.asarray(predicted)
        if t.shape != p.shape or t.ndim != 1:
            raise InputError(f"label arrays must be 1-D and equal length, got {t.shape}, {p.shape}")
        if t.size == 0:
            return
        if t.min() < 0 or t.max() >= NUM_CLASSES or p.min() < 0 or p.max() >= NUM_CLASSES:
            raise InputError(f"labels must lie in [0, {NUM_CLASSES})")
        np.add.at(self.counts, (t.astype(np.int64), p.astype(np.int64)), 1)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassRates:
    """One-vs-rest fractions for a single class; None marks 0/0."""

    sensitivity: float | None
    positive_predictivity: float | None
    specificity: float | None
    f1: float | None


def class_rates(matrix: Array, c: int) -> ClassRates:
    m = np.asarray(matrix, dtype=np.int64)
    tp = int(m[c, c])
    fn = int(m[c].sum()) - tp
    fp = int(m[:, c].sum()) - tp
    tn = int(m.sum()) - tp - fn - fp

    def ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    se = ratio(tp, tp + fn)
    pp = ratio(tp, tp + fp)
    spe = ratio(tn, tn + fp)
    f1 = ratio(2 * tp, 2 * tp + fn + fp) if (tp + fn and tp + fp) else None
    return ClassRates(se, pp, spe, f1)


def overall_accuracy(matrix: Array) -> float:
    m = np.asarray(matrix, dtype=np.int64)
    total = int(m.sum())
    if total == 0:
        raise InputError("cannot compute accuracy of an empty matrix")
    return int(np.trace(m)) / total


def round_percent(fraction: float | None) -> float | None:
    """fraction -> percent with 2 decimals, ties away from zero (not banker's)."""
    if fraction is None:
        return None
    q = Decimal(fraction * 100.0).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return float(q)


def _macro(values: list[float | None]) -> tuple[float | None, int]:
    kept = [v for v in values if v is not None]
    excluded = len(values) - len(kept)
    if not kept:
        return None, excluded
    return sum(kept) / len(kept), excluded


@dataclass(frozen=True)
class MetricsReport:
    """Rounded view of one evaluation; equality and (de)serialization target."""

    matrix: tuple[tuple[int, ...], ...]
    accuracy: float
    sensitivity: tuple[float | None, ...]
    positive_predictivity: tuple[float | None, ...]
    specificity: tuple[float | None, ...]
    f1: tuple[float | None, ...]
    macro_sensitivity: float | None
    macro_positive_predictivity: float | None
    macro_f1: float | None
    excluded_classes: int


def report_from_matrix(matrix: Array) -> MetricsReport:
    m = np.asarray(matrix, dtype=np.int64)
    if m.shape != (NUM_CLASSES, NUM_CLASSES) or (m < 0).any():
        raise InputError(f"matrix must be non-negative [{NUM_CLASSES}, {NUM_CLASSES}]")
    rates = [class_rates(m, c) for c in range(NUM_CLASSES)]
    macro_se, ex_se = _macro([r.sensitivity for r in rates])
    macro_pp, ex_pp = _macro([r.positive_predictivity for r in rates])
    macro_f1, ex_f1 = _macro([r.f1 for r in rates])
    return MetricsReport(
        matrix=tuple(tuple(int(v) for v in row) for row in m),
        accuracy=round_percent(overall_accuracy(m)),
        sensitivity=tuple(round_percent(r.sensitivity) for r in rates),
        positive_predictivity=tuple(round_percent(r.positive_predictivity) for r in rates),
        specificity=tuple(round_percent(r.specificity) for r in rates),
        f1=tuple(round_percent(r.f1) for r in rates),
        macro_sensitivity=round_percent(macro_se),
        macro_positive_predictivity=round_percent(macro_pp),
        macro_f1=round_percent(macro_f1),
        excluded_classes=max(ex_se, ex_pp, ex_f1),
    )


def _cell(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def render_report(report: MetricsReport) -> str:
    """Count matrix with per-class rate columns, then the summary block."""
    lines = [f"heartbeat classification report (format {_REPORT_VERSION})"]
    head = f"{'true/pred':>10}" + "".join(f"{c:>9}" for c in AAMI_CLASSES)
    head += f"{'Se%':>9}{'+P%':>9}{'Spe%':>9}{'F1%':>9}"
    lines.append(head)
    for i, name in enumerate(AAMI_CLASSES):
        row = f"{name:>10}" + "".join(f"{v:>9}" for v in report.matrix[i])
        row += (f"{_cell(report.sensitivity[i]):>9}"
                f"{_cell(report.positive_predictivity[i]):>9}"
                f"{_cell(report.specificity[i]):>9}"
                f"{_cell(report.f1[i]):>9}")
        lines.append(row)
    lines.append(f"accuracy%: {_cell(report.accuracy)}")
    lines.append(f"macro-sensitivity%: {_cell(report.macro_sensitivity)}")
    lines.append(f"macro-positive-predictivity%: {_cell(report.macro_positive_predictivity)}")
    lines.append(f"macro-f1%: {_cell(report.macro_f1)}")
    lines.append(f"classes-excluded-from-macro: {report.excluded_classes}")
    return "\n".join(lines) + "\n"


def _parse_cell(token: str) -> float | None:
    if token == "n/a":
        return None
    try:
        return float(token)
    except ValueError:
        raise InputError(f"bad report cell {token!r}") from None


def parse_report(text: str) -> MetricsReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2 + NUM_CLASSES + 5:
        raise InputError(f"report must have {2 + NUM_CLASSES + 5} lines, got {len(lines)}")
    if not lines[0].startswith("heartbeat classification report"):
        raise InputError("missing report header line")
    matrix = []
    se, pp, spe, f1 = [], [], [], []
    for i, name in enumerate(AAMI_CLASSES):
        tokens = lines[2 + i].split()
        if len(tokens) != 1 + NUM_CLASSES + 4 or tokens[0] != name:
            raise InputError(f"bad report row for class {name}: {lines[2 + i]!r}")
        matrix.append(tuple(int(t) for t in tokens[1:1 + NUM_CLASSES]))
        se.append(_parse_cell(tokens[-4]))
        pp.append(_parse_cell(tokens[-3]))
        spe.append(_parse_cell(tokens[-2]))
        f1.append(_parse_cell(tokens[-1]))

    def tail(idx: int, label: str) -> str:
        prefix = label + ": "
        if not lines[idx].startswith(prefix):
            raise InputError(f"expected {label!r} line, got {lines[idx]!r}")
        return lines[idx][len(prefix):].strip()

    base = 2 + NUM_CLASSES
    return MetricsReport(
        matrix=tuple(matrix),
        accuracy=_parse_cell(tail(base, "accuracy%")),
        sensitivity=tuple(se),
        positive_predictivity=tuple(pp),
        specificity=tuple(spe),
        f1=tuple(f1),
        macro_sensitivity=_parse_cell(tail(base + 1, "macro-sensitivity%")),
        macro_positive_predictivity=_parse_cell(tail(base + 2, "macro-positive-predictivity%")),
        macro_f1=_parse_cell(tail(base + 3, "macro-f1%")),
        excluded_classes=int(tail(base + 4, "classes-excluded-from-macro")),
    )


def report_to_json_text(report: MetricsReport) -> str:
    doc = {
        "format_version": _REPORT_VERSION,
        "classes": list(AAMI_CLASSES),
        "matrix": [list(row) for row in report.matrix],
        "accuracy_pct": report.accuracy,
        "per_class": {
            name: {
                "sensitivity_pct": report.sensitivity[i],
                "positive_predictivity_pct": report.positive_predictivity[i],
                "specificity_pct": report.specificity[i],
                "f1_pct": report.f1[i],
            } for i, name in enumerate(AAMI_CLASSES)
        },
        "macro": {
            "sensitivity_pct": report.macro_sensitivity,
            "positive_predictivity_pct": report.macro_positive_predictivity,
            "f1_pct": report.macro_f1,
            "classes_excluded": report.excluded_classes,
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def report_from_json_text(text: str) -> MetricsReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed report JSON: {e}") from None
    if doc.get("format_version") != _REPORT_VERSION:
        raise InputError(f"unsupported report format_version {doc.get('format_version')!r}")
    per = doc["per_class"]
    return MetricsReport(
        matrix=tuple(tuple(int(v) for v in row) for row in doc["matrix"]),
        accuracy=doc["accuracy_pct"],
        sensitivity=tuple(per[c]["sensitivity_pct"] for c in AAMI_CLASSES),
        positive_predictivity=tuple(per[c]["positive_predictivity_pct"] for c in AAMI_CLASSES),
        specificity=tuple(per[c]["specificity_pct"] for c in AAMI_CLASSES),
        f1=tuple(per[c]["f1_pct"] for c in AAMI_CLASSES),
        macro_sensitivity=doc["macro"]["sensitivity_pct"],
        macro_positive_predictivity=doc["macro"]["positive_predictivity_pct"],
        macro_f1=doc["macro"]["f1_pct"],
        excluded_classes=int(doc["macro"]["classes_excluded"]),
    )
