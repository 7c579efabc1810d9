"""Command-line surface: reproducible reports from ledger files.

Exit codes: 0 success, 1 domain error (bad data), 2 usage error (bad flags
or unreadable files).  Machine-readable CSV/JSON goes to stdout or the
requested files; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import efficiency, equilibrium, ledger, roundsim, strategy
from .errors import DomainError
from .funding import Contribution, ProjectLedger
from .report import build_report

DEFAULT_SWEEP_PROFILES = "1:1,1:2,1:15"


def _ledgers_from_file(path) -> tuple[list[ProjectLedger], ledger.LoadResult]:
    loaded = ledger.load_contributions(path)
    for error in loaded.errors:
        print(f"{path}:{error.line}: {error.message}", file=sys.stderr)
    by_project: dict[str, list[Contribution]] = {}
    for record in loaded.contributions:
        by_project.setdefault(record.project_id, []).append(record)
    ledgers = [
        ProjectLedger.build(project, rows, category=loaded.project_categories.get(project, ""))
        for project, rows in sorted(by_project.items())
    ]
    return ledgers, loaded


def _write_or_stdout(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text, encoding="utf-8")


def _cmd_allocate(args) -> int:
    ledgers, _ = _ledgers_from_file(args.contributions)
    pools = ledger.load_pools(args.pools)
    report = build_report(ledgers, pools, cap_at_target=args.cap_at_target, strict=True)
    _write_or_stdout(report.to_json(), args.json)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["category", "project_id", "contributors", "total", "f_qf", "m_qf", "m_actual", "f_actual", "lambda_p"]
            )
            for block in report.categories:
                for project in block.projects:
                    writer.writerow(
                        [
                            block.category,
                            project.project_id,
                            project.contributor_count,
                            repr(project.total),
                            repr(project.f_qf),
                            repr(project.m_qf),
                            repr(project.m_actual),
                            repr(project.f_actual),
                            "" if project.lambda_p is None else repr(project.lambda_p),
                        ]
                    )
    return 0


def _cmd_diagnose(args) -> int:
    ledgers, _ = _ledgers_from_file(args.contributions)
    pools = ledger.load_pools(args.pools)
    report = build_report(ledgers, pools, strict=True)
    k_of = {block.category: block.k for block in report.categories}
    lambda_reports = [
        efficiency.lambda_report(item, k_of[item.category])
        for item in ledgers
        if item.contributor_count > 0
    ]
    stats = [
        efficiency.dispersion(lambda_reports, category)
        for category in sorted({r.category for r in lambda_reports})
    ]
    payload = {
        "k_policy": "final",
        "projects": [
            {
                "project_id": r.project_id,
                "category": r.category,
                "n": r.n,
                "k_used": r.k_used,
                "lambda_p": r.lambda_p,
                "lower_bound": r.lower_bound,
            }
            for r in sorted(lambda_reports, key=lambda r: r.project_id)
        ],
        "categories": [
            {
                "category": s.category,
                "project_count": s.project_count,
                "mean": s.mean,
                "stdev": s.stdev,
                "min": s.min,
                "max": s.max,
            }
            for s in stats
        ],
    }
    _write_or_stdout(json.dumps(payload, indent=2), args.json)
    return 0


def _parse_profiles(text: str) -> list[tuple[float, ...]]:
    profiles = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            raise DomainError(f"empty profile in {text!r}")
        try:
            amounts = tuple(float(part) for part in chunk.split(":"))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad ratio profile {chunk!r}: {exc}") from None
        if len(amounts) < 1 or any(a <= 0 for a in amounts):
            raise argparse.ArgumentTypeError(f"bad ratio profile {chunk!r}: need positive amounts")
        profiles.append(amounts)
    return profiles


def _cmd_sweep_k(args) -> int:
    profiles = args.profiles
    if args.steps < 2 or args.k_max <= args.k_min:
        raise DomainError("need at least 2 steps and k-max > k-min")
    step = (args.k_max - args.k_min) / (args.steps - 1)
    grid = [args.k_min + i * step for i in range(args.steps)]
    points = efficiency.k_sweep(profiles, grid)
    lines = ["profile_label,k,lambda_p"]
    lines += [f"{p.profile_label},{p.k!r},{p.lambda_p!r}" for p in points]
    _write_or_stdout("\n".join(lines), args.out)
    return 0


def _cmd_collusion(args) -> int:
    lines = ["n,k,alpha_star,alpha_double_star"]
    if args.sweep:
        ns = [int(x) for x in args.ring_sizes.split(",")]
        if args.steps < 2 or args.k_max <= 1.0:
            raise DomainError("need at least 2 steps and k-max > 1")
        step = (args.k_max - 1.0) / (args.steps - 1)
        grid = [1.0 + i * step for i in range(args.steps)]
        rows = strategy.threshold_sweep(ns, grid)
    else:
        rows = [strategy.collusion_thresholds(args.n, args.k)]
    lines += [f"{r.n},{r.k!r},{r.alpha_star!r},{r.alpha_double_star!r}" for r in rows]
    _write_or_stdout("\n".join(lines), args.out)
    return 0


def _cmd_equilibrium(args) -> int:
    valuations = equilibrium.load_valuations(args.valuations)
    budgets = None
    if args.budgets:
        with open(args.budgets, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or "contributor_id" not in reader.fieldnames or "budget" not in reader.fieldnames:
                raise ledger.LedgerFormatError(f"{args.budgets}: expected columns contributor_id,budget")
            budgets = {row["contributor_id"]: float(row["budget"]) for row in reader}
    result = equilibrium.best_response(valuations, args.k, budgets, max_iter=args.max_iter)
    contributions: dict[str, dict[str, float]] = {}
    for (cid, pid), amount in sorted(result.contributions.items()):
        contributions.setdefault(cid, {})[pid] = amount
    payload = {
        "k": args.k,
        "converged": result.converged,
        "iterations": result.iterations,
        "welfare": result.welfare,
        "funds": dict(sorted(result.funds.items())),
        "aggregate_marginal": dict(sorted(result.aggregate_marginal.items())),
        "contributions": contributions,
        "clamped": sorted(list(pair) for pair in result.clamped),
    }
    if args.planner_pool is not None:
        planner = equilibrium.planner_optimum(valuations, args.planner_pool)
        payload["planner"] = {
            "pool": args.planner_pool,
            "funds": dict(sorted(planner.funds.items())),
            "common_marginal": planner.common_marginal,
            "welfare": planner.welfare,
        }
    _write_or_stdout(json.dumps(payload, indent=2), args.json)
    return 0


def load_simulation_file(path) -> tuple[roundsim.RoundConfig, list[roundsim.AgentSpec]]:
    """Parse the JSON round description (categories, events, agents)."""
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    config = roundsim.RoundConfig(
        categories=tuple(
            roundsim.CategorySpec(c["name"], float(c["pool"]), tuple(c["projects"]))
            for c in data["categories"]
        ),
        duration_days=int(data["duration_days"]),
        pool_events=tuple(
            roundsim.PoolEvent(int(e["day"]), e["category"], float(e["new_pool"]))
            for e in data.get("pool_events", ())
        ),
        seed=int(data.get("seed", 0)),
    )
    agents = []
    for raw in data.get("agents", ()):
        kind = raw["kind"]
        agents.append(
            roundsim.AgentSpec(
                agent_id=raw["id"],
                kind=kind,
                budget=float(raw["budget"]),
                activity=float(raw.get("activity", 1.0)),
                valuations=tuple(
                    equilibrium.Valuation(raw["id"], v["project"], v["family"], float(v["scale"]))
                    for v in raw.get("valuations", ())
                ),
                fixed_amount=float(raw["fixed_amount"]) if "fixed_amount" in raw else None,
                projects=tuple(raw.get("projects", ())),
                ring_id=raw.get("ring", ""),
                own_project=raw.get("own_project", ""),
                defects_from_round=raw.get("defects_from_round"),
            )
        )
    return config, agents


def _cmd_simulate(args) -> int:
    config, agents = load_simulation_file(args.config)
    if args.seed is not None:
        config = roundsim.RoundConfig(
            categories=config.categories,
            duration_days=config.duration_days,
            pool_events=config.pool_events,
            seed=args.seed,
        )
    trajectory = roundsim.run_round(config, agents)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    roundsim.write_k_series(trajectory, out_dir / "k_daily.csv")
    roundsim.emit_panel(trajectory, out_dir / "panel.csv")
    curve = roundsim.deficit_curve(trajectory)
    roundsim.write_deficit_curve(curve, out_dir / "deficit_curve.csv")
    (out_dir / "allocation_report.json").write_text(
        trajectory.final_report.to_json(), encoding="utf-8"
    )
    summary = {
        "seed": config.seed,
        "days": config.duration_days,
        "contributions": len(trajectory.panel),
        "final_k": trajectory.k_by_day[-1] if trajectory.k_by_day else {},
        "outputs": {
            "k_daily": str(out_dir / "k_daily.csv"),
            "panel": str(out_dir / "panel.csv"),
            "deficit_curve": str(out_dir / "deficit_curve.csv"),
            "allocation_report": str(out_dir / "allocation_report.json"),
        },
    }
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_reciprocal(args) -> int:
    loaded = ledger.load_contributions(args.contributions)
    for error in loaded.errors:
        print(f"{args.contributions}:{error.line}: {error.message}", file=sys.stderr)
    roster = ledger.load_roster(args.teams)
    graph = ledger.build_graph(loaded.contributions, roster, loaded.project_categories)
    report = ledger.reciprocity_stats(graph, weighted=args.weighted)
    cross = ledger.cross_category_stats(graph)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "reciprocal_report.csv"
    with open(report_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["project_id", "category", "outdegree", "reciprocal", "cross_outdegree", "cross_reciprocal"]
        )
        for row in report.rows:
            writer.writerow(
                [
                    row.project_id,
                    row.category,
                    f"{row.outdegree:g}",
                    f"{row.reciprocal:g}",
                    f"{row.cross_outdegree:g}",
                    f"{row.cross_reciprocal:g}",
                ]
            )
    cross_path = out_dir / "cross_category.csv"
    with open(cross_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "category",
                "project_count",
                "outside_project_share",
                "cross_reciprocal_share",
                "reciprocal_endpoints",
                "cross_endpoints",
            ]
        )
        for row in cross.rows:
            writer.writerow(
                [
                    row.category,
                    row.project_count,
                    repr(row.outside_project_share),
                    repr(row.cross_reciprocal_share),
                    row.reciprocal_endpoints,
                    row.cross_endpoints,
                ]
            )
    if cross.single_category:
        print("warning: single-category graph, cross shares are trivially 0", file=sys.stderr)

    def fit_dict(fit):
        return None if fit is None else {"slope": fit.slope, "intercept": fit.intercept, "n": fit.n_points}

    print(
        json.dumps(
            {
                "weighted": report.weighted,
                "slope": fit_dict(report.slope),
                "cross_slope_cross_denominator": fit_dict(report.cross_slope_cross_denominator),
                "cross_slope_total_denominator": fit_dict(report.cross_slope_total_denominator),
                "self_support_projects": len(graph.self_support),
                "outputs": {"report": str(report_path), "cross_category": str(cross_path)},
            },
            indent=2,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfround", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    allocate = sub.add_parser("allocate", help="scale pool matches across a round's projects")
    allocate.add_argument("--contributions", required=True)
    allocate.add_argument("--pools", required=True)
    allocate.add_argument("--cap-at-target", action="store_true")
    allocate.add_argument("--json", default=None, help="write report JSON here instead of stdout")
    allocate.add_argument("--csv", default=None, help="also write a per-project CSV")
    allocate.set_defaults(func=_cmd_allocate)

    diagnose = sub.add_parser("diagnose", help="per-project multipliers and per-category dispersion")
    diagnose.add_argument("--contributions", required=True)
    diagnose.add_argument("--pools", required=True)
    diagnose.add_argument("--json", default=None)
    diagnose.set_defaults(func=_cmd_diagnose)

    sweep = sub.add_parser("sweep-k", help="multiplier curves over a grid of k values")
    sweep.add_argument("--profiles", type=_parse_profiles, default=_parse_profiles(DEFAULT_SWEEP_PROFILES))
    sweep.add_argument("--k-min", type=float, default=1.0)
    sweep.add_argument("--k-max", type=float, default=20.0)
    sweep.add_argument("--steps", type=int, default=100)
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(func=_cmd_sweep_k)

    collusion = sub.add_parser("collusion", help="ring participation thresholds")
    collusion.add_argument("--n", type=int, default=25)
    collusion.add_argument("--k", type=float, default=1.0)
    collusion.add_argument("--sweep", action="store_true")
    collusion.add_argument("--ring-sizes", default="10,25")
    collusion.add_argument("--k-max", type=float, default=30.0)
    collusion.add_argument("--steps", type=int, default=30)
    collusion.add_argument("--out", default=None)
    collusion.set_defaults(func=_cmd_collusion)

    equilibrium_cmd = sub.add_parser("equilibrium", help="best-response fixed point (and planner)")
    equilibrium_cmd.add_argument("--valuations", required=True)
    equilibrium_cmd.add_argument("--k", type=float, required=True)
    equilibrium_cmd.add_argument("--budgets", default=None)
    equilibrium_cmd.add_argument("--planner-pool", type=float, default=None)
    equilibrium_cmd.add_argument("--max-iter", type=int, default=10_000)
    equilibrium_cmd.add_argument("--json", default=None)
    equilibrium_cmd.set_defaults(func=_cmd_equilibrium)

    simulate = sub.add_parser("simulate", help="run a configured round")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--out-dir", default="round_out")
    simulate.add_argument("--seed", type=int, default=None, help="override the config seed")
    simulate.set_defaults(func=_cmd_simulate)

    reciprocal = sub.add_parser("reciprocal", help="reciprocal-backing forensics")
    reciprocal.add_argument("--contributions", required=True)
    reciprocal.add_argument("--teams", required=True)
    reciprocal.add_argument("--out-dir", default=".")
    reciprocal.add_argument("--weighted", action="store_true")
    reciprocal.set_defaults(func=_cmd_reciprocal)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:  # pragma: no cover - console script shim
    raise SystemExit(main())


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
