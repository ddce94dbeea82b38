"""Approval and inter-rater agreement statistics for review annotations.

All statistics operate on an :class:`AnnotationMatrix` of approve/decline
verdicts with missing cells allowed. Undefined statistics (no co-annotated
items, or a degenerate chance-agreement term) are reported as ``None``
rather than a made-up number.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator

APPROVED = "approved"
DECLINED = "declined"
_DECISIONS = (APPROVED, DECLINED)


class AnnotationError(ValueError):
    pass


@dataclass
class AnnotationMatrix:
    """Items x raters verdict table; absent cells mean "not annotated"."""

    items: tuple[str, ...]
    raters: tuple[str, ...]
    cells: dict[tuple[str, str], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.items:
            raise AnnotationError("matrix needs at least one item")
        if not self.raters:
            raise AnnotationError("matrix needs at least one rater")
        if len(set(self.items)) != len(self.items):
            raise AnnotationError("duplicate item ids")
        if len(set(self.raters)) != len(self.raters):
            raise AnnotationError("duplicate rater ids")
        known = set(self.items), set(self.raters)
        for (item, rater), decision in self.cells.items():
            if item not in known[0] or rater not in known[1]:
                raise AnnotationError(f"cell ({item!r}, {rater!r}) outside the matrix")
            if decision not in _DECISIONS:
                raise AnnotationError(f"decision must be approved/declined, got {decision!r}")

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, str]]) -> "AnnotationMatrix":
        """Build from (item, rater, decision) rows; later duplicates win."""
        items: dict[str, None] = {}
        raters: dict[str, None] = {}
        cells: dict[tuple[str, str], str] = {}
        for item, rater, decision in records:
            items.setdefault(item, None)
            raters.setdefault(rater, None)
            cells[(item, rater)] = decision
        if not cells:
            raise AnnotationError("no annotation records")
        return cls(items=tuple(items), raters=tuple(raters), cells=cells)

    def decision(self, item: str, rater: str) -> str | None:
        return self.cells.get((item, rater))

    def rater_decisions(self, rater: str) -> Iterator[str]:
        for item in self.items:
            value = self.cells.get((item, rater))
            if value is not None:
                yield value

    def co_annotated(self, first: str, second: str) -> list[str]:
        return [
            item
            for item in self.items
            if (item, first) in self.cells and (item, second) in self.cells
        ]


def load_annotations_csv(path: str | Path) -> AnnotationMatrix:
    """Read item_id,rater_id,decision rows (header required)."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        required = {"item_id", "rater_id", "decision"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise AnnotationError(f"annotation CSV must have columns {sorted(required)}")
        rows = [
            (row["item_id"].strip(), row["rater_id"].strip(), row["decision"].strip().lower())
            for row in reader
        ]
    return AnnotationMatrix.from_records(rows)


def approval_rate(matrix: AnnotationMatrix, rater: str) -> float | None:
    """Share of the rater's verdicts that approve; None with no verdicts."""
    decisions = list(matrix.rater_decisions(rater))
    if not decisions:
        return None
    return decisions.count(APPROVED) / len(decisions)


def consensus_accepted(matrix: AnnotationMatrix, threshold_m: int) -> list[str]:
    """Items whose approvals among non-missing verdicts reach the threshold."""
    if threshold_m < 1:
        raise AnnotationError("consensus threshold must be at least 1")
    accepted = []
    for item in matrix.items:
        approvals = sum(
            1 for rater in matrix.raters if matrix.cells.get((item, rater)) == APPROVED
        )
        if approvals >= threshold_m:
            accepted.append(item)
    return accepted


def pairwise_agreement(matrix: AnnotationMatrix, first: str, second: str) -> float | None:
    """Fraction of co-annotated items where both verdicts are equal."""
    shared = matrix.co_annotated(first, second)
    if not shared:
        return None
    equal = sum(
        1 for item in shared if matrix.cells[(item, first)] == matrix.cells[(item, second)]
    )
    return equal / len(shared)


def cohen_kappa(matrix: AnnotationMatrix, first: str, second: str) -> float | None:
    """Chance-corrected agreement for one rater pair.

    Expected agreement uses each rater's own approval proportion over the
    co-annotated items. When expected agreement is 1 (both raters constant
    and identical) kappa is undefined and None is returned.
    """
    shared = matrix.co_annotated(first, second)
    if not shared:
        return None
    n = len(shared)
    p_first = sum(1 for i in shared if matrix.cells[(i, first)] == APPROVED) / n
    p_second = sum(1 for i in shared if matrix.cells[(i, second)] == APPROVED) / n
    p_observed = (
        sum(1 for i in shared if matrix.cells[(i, first)] == matrix.cells[(i, second)]) / n
    )
    p_expected = p_first * p_second + (1 - p_first) * (1 - p_second)
    if p_expected == 1.0:
        return None
    return (p_observed - p_expected) / (1 - p_expected)


def mean_pairwise_kappa(matrix: AnnotationMatrix) -> float | None:
    """Mean of defined pairwise kappas over all rater pairs."""
    values = [
        kappa
        for first, second in combinations(matrix.raters, 2)
        if (kappa := cohen_kappa(matrix, first, second)) is not None
    ]
    if not values:
        return None
    return sum(values) / len(values)


def gwet_ac1(matrix: AnnotationMatrix) -> float | None:
    """Multi-rater AC1 over items with at least two verdicts.

    Observed agreement averages, per item, the share of agreeing rater
    pairs. Chance agreement is 2*pi*(1-pi) for the overall approval
    proportion pi; a unanimous table (pi of 0 or 1) degenerates to the
    observed agreement itself.
    """
    per_item: list[float] = []
    approved_total = 0
    verdict_total = 0
    for item in matrix.items:
        verdicts = [
            matrix.cells[(item, rater)]
            for rater in matrix.raters
            if (item, rater) in matrix.cells
        ]
        approved_total += verdicts.count(APPROVED)
        verdict_total += len(verdicts)
        r = len(verdicts)
        if r < 2:
            continue
        a = verdicts.count(APPROVED)
        agreeing = a * (a - 1) // 2 + (r - a) * (r - a - 1) // 2
        per_item.append(agreeing / (r * (r - 1) / 2))
    if not per_item:
        return None
    p_observed = sum(per_item) / len(per_item)
    pi = approved_total / verdict_total
    p_expected = 2 * pi * (1 - pi)
    if pi in (0.0, 1.0):
        return p_observed
    return (p_observed - p_expected) / (1 - p_expected)


def per_rater_average_agreement(matrix: AnnotationMatrix, rater: str) -> float | None:
    """Mean of the rater's pairwise-agreement row, self included as 1.0."""
    values: list[float] = []
    for other in matrix.raters:
        if other == rater:
            continue
        value = pairwise_agreement(matrix, rater, other)
        if value is not None:
            values.append(value)
    if not values:
        return None
    values.append(1.0)
    return sum(values) / len(values)


def format_percent(value: float) -> str:
    """Percent with two decimals, ties away from zero (92.935 -> '92.94')."""
    return str(
        (Decimal(repr(value)) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    )


@dataclass
class AgreementReport:
    raters: tuple[str, ...]
    per_rater_approval: dict[str, float | None]
    pairwise: dict[str, dict[str, float | None]]
    per_rater_average: dict[str, float | None]
    overall_average: float | None
    mean_kappa: float | None
    ac1: float | None
    consensus_threshold: int
    consensus_accepted: list[str]

    def to_json(self) -> str:
        """One compact JSON object per call, suitable for JSON-lines logs."""
        return json.dumps(
            {
                "raters": list(self.raters),
                "per_rater_approval": self.per_rater_approval,
                "pairwise_agreement": self.pairwise,
                "per_rater_average_agreement": self.per_rater_average,
                "overall_average_agreement": self.overall_average,
                "mean_pairwise_kappa": self.mean_kappa,
                "gwet_ac1": self.ac1,
                "consensus_threshold": self.consensus_threshold,
                "consensus_accepted": self.consensus_accepted,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def to_text(self) -> str:
        def pct(value: float | None) -> str:
            return "-" if value is None else format_percent(value)

        def num(value: float | None) -> str:
            return "-" if value is None else f"{value:.4f}"

        width = max((len(r) for r in self.raters), default=5)
        width = max(width, 5)
        lines = ["Approval rates"]
        for rater in self.raters:
            lines.append(f"  {rater:<{width}}  {pct(self.per_rater_approval[rater])}%")
        lines.append("Pairwise agreement")
        header = "  " + " " * width + "  " + "  ".join(f"{r:>{width}}" for r in self.raters)
        lines.append(header)
        for rater in self.raters:
            row = [
                f"{pct(self.pairwise[rater][other]) if other != rater else '100.00':>{width}}"
                for other in self.raters
            ]
            lines.append(f"  {rater:<{width}}  " + "  ".join(row))
        lines.append("Average agreement per rater")
        for rater in self.raters:
            lines.append(f"  {rater:<{width}}  {pct(self.per_rater_average[rater])}%")
        lines.append(f"Overall average agreement: {pct(self.overall_average)}%")
        lines.append(f"Mean pairwise Cohen kappa: {num(self.mean_kappa)}")
        lines.append(f"Gwet AC1: {num(self.ac1)}")
        lines.append(
            f"Consensus (>= {self.consensus_threshold} approvals): "
            f"{len(self.consensus_accepted)} item(s)"
        )
        return "\n".join(lines)


def agreement_report(matrix: AnnotationMatrix, threshold_m: int) -> AgreementReport:
    """Compute every reported statistic in one pass over the matrix."""
    pairwise: dict[str, dict[str, float | None]] = {r: {} for r in matrix.raters}
    for first, second in combinations(matrix.raters, 2):
        value = pairwise_agreement(matrix, first, second)
        pairwise[first][second] = value
        pairwise[second][first] = value

    per_average = {
        rater: per_rater_average_agreement(matrix, rater) for rater in matrix.raters
    }
    defined_averages = [v for v in per_average.values() if v is not None]
    overall = sum(defined_averages) / len(defined_averages) if defined_averages else None

    return AgreementReport(
        raters=matrix.raters,
        per_rater_approval={r: approval_rate(matrix, r) for r in matrix.raters},
        pairwise=pairwise,
        per_rater_average=per_average,
        overall_average=overall,
        mean_kappa=mean_pairwise_kappa(matrix),
        ac1=gwet_ac1(matrix),
        consensus_threshold=threshold_m,
        consensus_accepted=consensus_accepted(matrix, threshold_m),
    )
