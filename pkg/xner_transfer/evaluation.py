"""
Entity-level scoring and report tables.

A predicted entity counts as correct only when a gold entity with the same
start, end and type exists in the same sentence (exact match, as conlleval
scores chunks).
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

from .corpus import LabeledSentence
from .errors import ShapeMismatch
from .spans import decode_spans

CSV = "csv"
MARKDOWN = "markdown"
REPORT_FORMATS = (CSV, MARKDOWN)


def calc_metrics(
    true_pos: int, predicted: int, gold: int
) -> Tuple[float, float, float]:
    """Precision, recall, F1; each is 0.0 when its denominator is 0."""
    precision = true_pos / predicted if predicted else 0.0
    recall = true_pos / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class Scores:
    true_pos: int
    predicted: int
    gold: int

    @property
    def precision(self) -> float:
        return calc_metrics(self.true_pos, self.predicted, self.gold)[0]

    @property
    def recall(self) -> float:
        return calc_metrics(self.true_pos, self.predicted, self.gold)[1]

    @property
    def f1(self) -> float:
        return calc_metrics(self.true_pos, self.predicted, self.gold)[2]

    @property
    def support(self) -> int:
        return self.gold

    def to_dict(self) -> Dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "true_pos": self.true_pos,
            "predicted": self.predicted,
            "gold": self.gold,
        }


@dataclass(frozen=True)
class EvalReport:
    """Per-type and micro-averaged scores."""

    per_type: Dict[str, Scores]
    micro: Scores

    @property
    def precision(self) -> float:
        return self.micro.precision

    @property
    def recall(self) -> float:
        return self.micro.recall

    @property
    def f1(self) -> float:
        return self.micro.f1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "micro": self.micro.to_dict(),
            "per_type": {t: s.to_dict() for t, s in sorted(self.per_type.items())},
        }


def evaluate(
    pred: Sequence[LabeledSentence], gold: Sequence[LabeledSentence]
) -> EvalReport:
    """
    Score predicted sentences against gold ones.

    Raises:
        ShapeMismatch: If the sentence counts differ, or a predicted sentence
            has a different length than its gold sentence
    """
    if len(pred) != len(gold):
        raise ShapeMismatch(
            min(len(pred), len(gold)),
            f"{len(pred)} predicted sentences for {len(gold)} gold sentences",
        )
    true_pos: Dict[str, int] = {}
    predicted: Dict[str, int] = {}
    gold_count: Dict[str, int] = {}
    for index, (p, g) in enumerate(zip(pred, gold)):
        if len(p.tags) != len(g.tags):
            raise ShapeMismatch(index, f"{len(p.tags)} tags for {len(g.tags)} tokens")
        gold_keys = {span.key for span in decode_spans(g.tags)}
        for span in decode_spans(g.tags):
            gold_count[span.etype] = gold_count.get(span.etype, 0) + 1
        for span in decode_spans(p.tags):
            predicted[span.etype] = predicted.get(span.etype, 0) + 1
            if span.key in gold_keys:
                true_pos[span.etype] = true_pos.get(span.etype, 0) + 1

    types = sorted(set(gold_count) | set(predicted))
    per_type = {
        t: Scores(true_pos.get(t, 0), predicted.get(t, 0), gold_count.get(t, 0))
        for t in types
    }
    micro = Scores(
        sum(true_pos.values()), sum(predicted.values()), sum(gold_count.values())
    )
    return EvalReport(per_type, micro)


@dataclass
class ReportTable:
    """
    A titled table of results.

    Float cells are fractions in [0, 1] (or standard deviations of them);
    integers and strings are printed as they are. Notes are reference
    annotations rendered under the markdown table.
    """

    title: str
    columns: List[str]
    rows: List[List[Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add_row(self, row: Sequence[Any]) -> None:
        if len(row) != len(self.columns):
            raise ValueError(
                f"row has {len(row)} cells, table has {len(self.columns)} columns"
            )
        self.rows.append(list(row))

    def row(self, label: str) -> List[Any]:
        for row in self.rows:
            if row[0] == label:
                return row
        raise KeyError(label)

    def column(self, name: str) -> List[Any]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


def _csv_cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _markdown_cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{100 * value:.1f}"
    return str(value)


def emit_report(table: ReportTable, fmt: str = MARKDOWN) -> str:
    """
    Render a table as CSV (fractions, 4 decimals) or markdown (percentages,
    1 decimal). Column order is the table's own; an empty table renders its
    header only.
    """
    if fmt == CSV:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_csv_cell(v) for v in row])
        return buffer.getvalue()
    if fmt != MARKDOWN:
        raise ValueError(f"unknown report format {fmt!r}; use one of {REPORT_FORMATS}")

    lines = [
        "| " + " | ".join(table.columns) + " |",
        "|" + "|".join("---" for _ in table.columns) + "|",
    ]
    for row in table.rows:
        lines.append("| " + " | ".join(_markdown_cell(v) for v in row) + " |")
    text = (f"### {table.title}\n\n" if table.title else "") + "\n".join(lines) + "\n"
    if table.notes:
        text += "\n" + "\n".join(f"> {note}" for note in table.notes) + "\n"
    return text


def report_table(report: EvalReport, title: str = "evaluation") -> ReportTable:
    """Per-type rows followed by the micro average."""
    table = ReportTable(title, ["type", "precision", "recall", "f1", "support"])
    for etype, scores in sorted(report.per_type.items()):
        table.add_row([etype, scores.precision, scores.recall, scores.f1, scores.gold])
    micro = report.micro
    table.add_row(["micro", micro.precision, micro.recall, micro.f1, micro.gold])
    return table
