"""Score model predictions against gold labels as 4-class classification
with an explicit failure outcome.

A failed prediction (no usable rating) counts against the recall of its gold
class but never against any precision: it is an abstention, and it is also
reported separately as failure_rate so parse failures stay visible instead
of vanishing into accuracy. Empty denominators yield 0, never NaN. Because
the scale is ordinal, mean absolute error and off-by-one accuracy over the
parsed predictions are carried as secondary columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import AgreementStats

CLASSES = (1, 2, 3, 4)

GROUP_AXES = {
    "model": "model_tag",
    "strategy": "strategy",
    "temperature": "temperature",
    "robot": "robot_id",
    "query_mode": "query_mode",
}

DEFAULT_GROUP_BY = ("model", "strategy", "temperature")


@dataclass(frozen=True)
class PredictionRecord:
    """One model outcome for one (instance, robot) query, with provenance."""

    instance_id: str
    robot_id: str
    model_tag: str
    strategy: str
    temperature: float
    query_mode: str
    rating: int | None = None
    failure: str | None = None
    extraction_tier: str | None = None
    latency_ms: float = 0.0
    run_id: str = ""
    attempt_count: int = 1
    created_at: float = 0.0

    def __post_init__(self):
        if (self.rating is None) == (self.failure is None):
            raise ValueError("exactly one of rating and failure must be set")
        if self.rating is not None and self.rating not in CLASSES:
            raise ValueError(f"rating must be in 1..4, got {self.rating!r}")
        for name in ("instance_id", "robot_id", "model_tag", "strategy", "query_mode"):
            if not getattr(self, name):
                raise ValueError(f"provenance field {name} must be non-empty")

    def to_json_dict(self) -> dict:
        out = {
            "instance_id": self.instance_id,
            "robot_id": self.robot_id,
            "model_tag": self.model_tag,
            "strategy": self.strategy,
            "temperature": self.temperature,
            "query_mode": self.query_mode,
            "outcome": {"rating": self.rating} if self.rating is not None else {"failure": self.failure},
            "latency_ms": self.latency_ms,
            "run_id": self.run_id,
            "attempt_count": self.attempt_count,
            "created_at": self.created_at,
        }
        if self.extraction_tier is not None:
            out["extraction_tier"] = self.extraction_tier
        return out

    @classmethod
    def from_json_dict(cls, raw: Mapping) -> "PredictionRecord":
        outcome = raw["outcome"]
        return cls(
            instance_id=raw["instance_id"],
            robot_id=raw["robot_id"],
            model_tag=raw["model_tag"],
            strategy=raw["strategy"],
            temperature=float(raw["temperature"]),
            query_mode=raw["query_mode"],
            rating=outcome.get("rating"),
            failure=outcome.get("failure"),
            extraction_tier=raw.get("extraction_tier"),
            latency_ms=float(raw.get("latency_ms", 0.0)),
            run_id=raw.get("run_id", ""),
            attempt_count=int(raw.get("attempt_count", 1)),
            created_at=float(raw.get("created_at", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class ConfusionResult:
    matrix: np.ndarray  # (4, 4) int, rows = gold, cols = predicted
    failures: np.ndarray  # (4,) int, failed predictions per gold class

    @property
    def n_scored(self) -> int:
        return int(self.matrix.sum() + self.failures.sum())


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvaluationReport:
    group_key: dict
    matrix: tuple  # 4x4 nested tuples
    failure_col: tuple  # per gold class
    per_class: dict[int, ClassScores]
    macro_f1: float
    failure_rate: float
    n_scored: int
    mae: float
    off_by_one_accuracy: float

    def to_json_dict(self) -> dict:
        return {
            "group": self.group_key,
            "confusion": [list(row) for row in self.matrix],
            "failures_per_gold_class": list(self.failure_col),
            "per_class": {
                str(c): {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for c, s in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "failure_rate": self.failure_rate,
            "n_scored": self.n_scored,
            "mae": self.mae,
            "off_by_one_accuracy": self.off_by_one_accuracy,
        }


def confusion(
    preds: Sequence[PredictionRecord],
    gold: Mapping[tuple[str, str], int],
) -> ConfusionResult:
    """Tally predictions into a 4x4 gold-by-predicted matrix plus a failure
    column per gold class. Every prediction must have a gold label."""
    matrix = np.zeros((4, 4), dtype=np.int64)
    failures = np.zeros(4, dtype=np.int64)
    missing = []
    for pred in preds:
        key = (pred.instance_id, pred.robot_id)
        if key not in gold:
            missing.append(key)
            continue
        g = int(gold[key])
        if pred.rating is None:
            failures[g - 1] += 1
        else:
            matrix[g - 1, pred.rating - 1] += 1
    if missing:
        raise ValueError(f"predictions without gold label: {sorted(set(missing))}")
    return ConfusionResult(matrix=matrix, failures=failures)


def per_class_f1(conf: ConfusionResult) -> tuple[dict[int, ClassScores], float]:
    """Precision, recall, F1 per class, and the unweighted macro F1.

    Failures enter the recall denominator of their gold class only.
    """
    scores = {}
    f1_values = []
    for c in CLASSES:
        i = c - 1
        col = int(conf.matrix[:, i].sum())
        row = int(conf.matrix[i, :].sum())
        diag = int(conf.matrix[i, i])
        support = row + int(conf.failures[i])
        precision = diag / col if col else 0.0
        recall = diag / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores[c] = ClassScores(precision=precision, recall=recall, f1=f1, support=support)
        f1_values.append(f1)
    return scores, sum(f1_values) / len(f1_values)


def _ordinal_columns(preds: Sequence[PredictionRecord], gold) -> tuple[float, float]:
    errors = [
        abs(pred.rating - int(gold[(pred.instance_id, pred.robot_id)]))
        for pred in preds
        if pred.rating is not None
    ]
    if not errors:
        return 0.0, 0.0
    mae = sum(errors) / len(errors)
    off_by_one = sum(1 for e in errors if e <= 1) / len(errors)
    return mae, off_by_one


def evaluate(
    preds: Sequence[PredictionRecord],
    gold: Mapping[tuple[str, str], int],
    group_key: dict | None = None,
) -> EvaluationReport:
    conf = confusion(preds, gold)
    per_class, macro = per_class_f1(conf)
    n = conf.n_scored
    failure_rate = float(conf.failures.sum()) / n if n else 0.0
    mae, off_by_one = _ordinal_columns(preds, gold)
    return EvaluationReport(
        group_key=dict(group_key or {}),
        matrix=tuple(tuple(int(v) for v in row) for row in conf.matrix),
        failure_col=tuple(int(v) for v in conf.failures),
        per_class=per_class,
        macro_f1=macro,
        failure_rate=failure_rate,
        n_scored=n,
        mae=mae,
        off_by_one_accuracy=off_by_one,
    )


def group_report(
    preds: Sequence[PredictionRecord],
    gold: Mapping[tuple[str, str], int],
    group_by: Sequence[str] = DEFAULT_GROUP_BY,
) -> list[EvaluationReport]:
    """One report per group along the chosen axes, in stable group order."""
    if not preds:
        raise ValueError("group_report needs at least one prediction")
    unknown = [axis for axis in group_by if axis not in GROUP_AXES]
    if unknown:
        raise ValueError(f"unknown group axes {unknown}; choose from {sorted(GROUP_AXES)}")
    groups: dict[tuple, list[PredictionRecord]] = {}
    for pred in preds:
        key = tuple(getattr(pred, GROUP_AXES[axis]) for axis in group_by)
        groups.setdefault(key, []).append(pred)
    reports = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        group_key = dict(zip(group_by, key))
        reports.append(evaluate(groups[key], gold, group_key))
    return reports


def leaderboard(reports: Sequence[EvaluationReport]) -> list[dict]:
    """Groups sorted by macro F1 descending (ties: group key order)."""
    rows = [
        {
            "group": rep.group_key,
            "macro_f1": rep.macro_f1,
            "failure_rate": rep.failure_rate,
            "n_scored": rep.n_scored,
            "mae": rep.mae,
        }
        for rep in reports
    ]
    return sorted(rows, key=lambda r: (-r["macro_f1"], json.dumps(r["group"], sort_keys=True)))


def _group_title(group_key: dict) -> str:
    if not group_key:
        return "all predictions"
    return ", ".join(f"{k}={v}" for k, v in group_key.items())


def _markdown_confusion(report: EvaluationReport) -> list[str]:
    lines = ["| gold \\ predicted | 1 | 2 | 3 | 4 | failure |", "|---|---|---|---|---|---|"]
    for c in CLASSES:
        row = report.matrix[c - 1]
        lines.append(f"| {c} | " + " | ".join(str(v) for v in row) + f" | {report.failure_col[c - 1]} |")
    return lines


def emit_report(
    reports: Sequence[EvaluationReport],
    format: str = "markdown",
    agreement: AgreementStats | None = None,
) -> str:
    """Render reports as lossless JSON or human-readable markdown."""
    if format == "json":
        doc = {
            "reports": [rep.to_json_dict() for rep in reports],
            "leaderboard": leaderboard(reports),
        }
        if agreement is not None:
            doc["agreement"] = agreement.to_json_dict()
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if format != "markdown":
        raise ValueError(f"format must be json or markdown, got {format!r}")

    lines = ["# Traversability rating evaluation", ""]
    board = leaderboard(reports)
    if board:
        lines += ["## Leaderboard", "", "| group | macro F1 | failure rate | MAE | n |", "|---|---|---|---|---|"]
        for row in board:
            lines.append(
                f"| {_group_title(row['group'])} | {row['macro_f1']:.4f} "
                f"| {row['failure_rate']:.4f} | {row['mae']:.4f} | {row['n_scored']} |"
            )
        lines.append("")
    for rep in reports:
        lines += [f"## {_group_title(rep.group_key)}", ""]
        lines += _markdown_confusion(rep)
        lines += ["", "| class | precision | recall | F1 | support |", "|---|---|---|---|---|"]
        for c in CLASSES:
            s = rep.per_class[c]
            lines.append(f"| {c} | {s.precision:.4f} | {s.recall:.4f} | {s.f1:.4f} | {s.support} |")
        lines += [
            "",
            f"macro F1: {rep.macro_f1:.4f}  |  failure rate: {rep.failure_rate:.4f}  "
            f"|  MAE: {rep.mae:.4f}  |  off-by-one accuracy: {rep.off_by_one_accuracy:.4f}  "
            f"|  n: {rep.n_scored}",
            "",
        ]
    if agreement is not None:
        lines += ["## Annotator agreement", "", "| bin | count |", "|---|---|"]
        edges = agreement.edges
        for i, count in enumerate(agreement.counts):
            closing = "]" if i == len(agreement.counts) - 1 else ")"
            lines.append(f"| [{edges[i]:.2f}, {edges[i + 1]:.2f}{closing} | {count} |")
        lines.append("")
    return "\n".join(lines)
