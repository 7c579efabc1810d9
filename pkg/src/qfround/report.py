"""Round-level allocation reports combining funding math and diagnostics."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .efficiency import lambda_p
from .errors import DomainError, NoMatchableProjectsError
from .funding import ProjectLedger, cqf_allocate, matching_requirement, qf_target

__all__ = ["ProjectReport", "CategoryReport", "AllocationReport", "build_report"]


@dataclass(frozen=True)
class ProjectReport:
    project_id: str
    category: str
    contributor_count: int
    total: float
    f_qf: float
    m_qf: float
    m_actual: float
    f_actual: float
    lambda_p: float | None


@dataclass(frozen=True)
class CategoryReport:
    category: str
    pool: float
    k: float | None
    cap_at_target: bool
    surplus: float
    degenerate: bool
    projects: tuple[ProjectReport, ...]


@dataclass(frozen=True)
class AllocationReport:
    categories: tuple[CategoryReport, ...]
    # lambda_p is evaluated at each category's end-of-round k.
    k_policy: str = "final"

    def to_json_dict(self) -> dict:
        return {
            "k_policy": self.k_policy,
            "categories": [
                {
                    "category": c.category,
                    "pool": c.pool,
                    "k": c.k,
                    "cap_at_target": c.cap_at_target,
                    "surplus": c.surplus,
                    "degenerate": c.degenerate,
                    "projects": [
                        {
                            "project_id": p.project_id,
                            "contributors": p.contributor_count,
                            "total": p.total,
                            "f_qf": p.f_qf,
                            "m_qf": p.m_qf,
                            "m_actual": p.m_actual,
                            "f_actual": p.f_actual,
                            "lambda_p": p.lambda_p,
                        }
                        for p in c.projects
                    ],
                }
                for c in self.categories
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)


def build_report(
    ledgers: Sequence[ProjectLedger],
    pools: Mapping[str, float],
    *,
    cap_at_target: bool = False,
    strict: bool = True,
) -> AllocationReport:
    """Allocate every category's pool and attach per-project diagnostics.

    ``strict`` propagates the no-matchable-projects error (CLI behavior);
    otherwise such categories are reported with k=None, zero matches, and
    ``degenerate`` set (simulator behavior for quiet days or empty rounds).
    """
    by_category: dict[str, list[ProjectLedger]] = {name: [] for name in pools}
    for ledger in ledgers:
        if ledger.category not in pools:
            raise DomainError(f"no pool configured for category {ledger.category!r}")
        by_category[ledger.category].append(ledger)
    blocks = []
    for category in sorted(by_category):
        members = sorted(by_category[category], key=lambda l: l.project_id)
        pool = float(pools[category])
        try:
            allocation = cqf_allocate(members, pool, category=category, cap_at_target=cap_at_target)
        except NoMatchableProjectsError:
            if strict:
                raise
            projects = tuple(
                ProjectReport(
                    project_id=l.project_id,
                    category=category,
                    contributor_count=l.contributor_count,
                    total=l.total,
                    f_qf=qf_target(l),
                    m_qf=matching_requirement(l),
                    m_actual=0.0,
                    f_actual=l.total,
                    lambda_p=None,
                )
                for l in members
            )
            blocks.append(
                CategoryReport(category, pool, None, cap_at_target, pool, True, projects)
            )
            continue
        k = allocation.pool_state.k
        outcomes = allocation.by_project()
        projects = tuple(
            ProjectReport(
                project_id=l.project_id,
                category=category,
                contributor_count=l.contributor_count,
                total=l.total,
                f_qf=outcomes[l.project_id].f_qf,
                m_qf=outcomes[l.project_id].m_qf,
                m_actual=outcomes[l.project_id].m_actual,
                f_actual=outcomes[l.project_id].f_actual,
                lambda_p=lambda_p(l, k) if l.contributor_count else None,
            )
            for l in members
        )
        blocks.append(
            CategoryReport(category, pool, k, cap_at_target, allocation.surplus, False, projects)
        )
    return AllocationReport(tuple(blocks))
