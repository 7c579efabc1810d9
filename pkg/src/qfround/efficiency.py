"""Per-project efficiency multipliers under a constrained pool.

For a project with square-root shares alpha_i and scaling constant k, the
sum of contributors' marginal valuations implied by their first-order
conditions is

    lambda_p = sum_i [ 1/(k*alpha_i) + 1 - 1/k ]^(-1).

lambda_p equals 1 when k = 1 (the unconstrained optimum), rises toward the
contributor count n as k grows (pure private provision), and is always at
least n^2 / [ (1/k) * sum_i 1/alpha_i + n*(1 - 1/k) ], with equality for
equal shares.  Spread of lambda_p across a round's projects measures how
far the scaled allocation is from equalizing marginal benefits.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .errors import DomainError
from .funding import ProjectLedger

__all__ = [
    "LambdaReport",
    "DispersionStats",
    "SweepPoint",
    "lambda_p",
    "lambda_from_amounts",
    "lambda_lower_bound",
    "lambda_report",
    "k_sweep",
    "dispersion",
    "format_profile_label",
    "write_sweep_csv",
]


def _alphas(ledger: ProjectLedger) -> list[float]:
    amounts = ledger.contributor_amounts()
    if not amounts:
        raise DomainError(f"project {ledger.project_id!r} has no contributors")
    roots = [math.sqrt(amounts[cid]) for cid in sorted(amounts)]
    denom = math.fsum(roots)
    return [r / denom for r in roots]


def _check_k(k: float) -> None:
    if not math.isfinite(k) or k <= 0:
        raise DomainError(f"k must be positive, got {k!r}")


def lambda_from_amounts(amounts: Iterable[float], k: float) -> float:
    """lambda_p from raw per-contributor amounts (one entry per contributor)."""
    _check_k(k)
    roots = [math.sqrt(a) for a in amounts]
    denom = math.fsum(roots)
    if denom <= 0:
        raise DomainError("at least one positive contribution required")
    return math.fsum(1.0 / (denom / (k * r) + 1.0 - 1.0 / k) for r in roots)


def lambda_p(ledger: ProjectLedger, k: float) -> float:
    """Sum of marginal valuations implied by the first-order conditions."""
    _check_k(k)
    return math.fsum(1.0 / (1.0 / (k * a) + 1.0 - 1.0 / k) for a in _alphas(ledger))


def lambda_lower_bound(ledger: ProjectLedger, k: float) -> float:
    """Lower bound n^2 / [(1/k) sum_i 1/alpha_i + n (1 - 1/k)].

    Follows from the Cauchy-Schwarz (Engel form) inequality applied to the
    lambda_p sum; tight exactly when all shares are equal.
    """
    _check_k(k)
    alphas = _alphas(ledger)
    n = len(alphas)
    denom = math.fsum(1.0 / a for a in alphas) / k + n * (1.0 - 1.0 / k)
    return n * n / denom


@dataclass(frozen=True)
class LambdaReport:
    project_id: str
    lambda_p: float
    lower_bound: float
    n: int
    k_used: float
    category: str = ""


def lambda_report(ledger: ProjectLedger, k: float) -> LambdaReport:
    return LambdaReport(
        project_id=ledger.project_id,
        lambda_p=lambda_p(ledger, k),
        lower_bound=lambda_lower_bound(ledger, k),
        n=ledger.contributor_count,
        k_used=k,
        category=ledger.category,
    )


@dataclass(frozen=True)
class SweepPoint:
    profile_label: str
    k: float
    lambda_p: float


def format_profile_label(amounts: Sequence[float]) -> str:
    return ":".join(f"{a:g}" for a in amounts)


def k_sweep(
    ratio_profiles: Sequence[Sequence[float]],
    k_grid: Sequence[float],
    labels: Sequence[str] | None = None,
) -> list[SweepPoint]:
    """Evaluate lambda_p for each contribution profile over a grid of k values.

    Profiles are contribution vectors (only their ratios matter); the output
    is a plot-ready table of (profile_label, k, lambda_p) rows.
    """
    if not k_grid:
        raise DomainError("k grid must be nonempty")
    if labels is None:
        labels = [format_profile_label(p) for p in ratio_profiles]
    points = []
    for label, profile in zip(labels, ratio_profiles):
        for k in k_grid:
            points.append(SweepPoint(label, k, lambda_from_amounts(profile, k)))
    return points


def write_sweep_csv(points: Iterable[SweepPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["profile_label", "k", "lambda_p"])
        for point in points:
            writer.writerow([point.profile_label, repr(point.k), repr(point.lambda_p)])


@dataclass(frozen=True)
class DispersionStats:
    category: str
    mean: float
    stdev: float
    min: float
    max: float
    project_count: int


def dispersion(reports: Iterable[LambdaReport], category: str) -> DispersionStats:
    """Population summary of lambda_p across one category's projects."""
    values = [r.lambda_p for r in reports if r.category == category]
    if not values:
        raise DomainError(f"no reports in category {category!r}")
    return DispersionStats(
        category=category,
        mean=statistics.fmean(values),
        stdev=statistics.pstdev(values),
        min=min(values),
        max=max(values),
        project_count=len(values),
    )
