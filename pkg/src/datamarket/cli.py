"""Command-line entry point: ``datamarket {gen,value,select,price,run}``.

Exit codes: 0 success, 2 bad input, 3 infeasible configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .allocation import CompItem, Solver, base_compensation, eligible_owners, equal_split, select
from .core import Dataset, ModelTier, Money
from .errors import InfeasibleError, InputError, MarketError
from .io import (
    SurveyKind,
    emit_report,
    generate_owners,
    generate_survey,
    ingest_dataset,
    ingest_eval_set,
    read_survey,
    write_dataset,
    write_eval_set,
    write_survey,
)
from .pipeline import PipelineConfig, run_pipeline
from .pricing import PricingMethod, price_all, revenue_and_affordability
from .training import LossSpec
from .valuation import accuracy_oracle, exact_shapley, monte_carlo_shapley

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3


def _load_config(path: str | None) -> tuple[dict, Path]:
    if not path:
        return {}, Path.cwd()
    p = Path(path)
    try:
        with open(p) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: top level must be an object")
    return cfg, p.resolve().parent


def _pick(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _path(args, cfg: dict, base: Path, name: str) -> Path | None:
    value = getattr(args, name, None)
    if value is not None:
        return Path(value)
    if cfg.get(name) is not None:
        return base / cfg[name]
    return None


def _tiers(args, cfg: dict) -> tuple[ModelTier, ...]:
    delta = float(cfg.get("delta", 1e-6))
    if getattr(args, "tiers", None):
        eps = [float(e) for e in args.tiers.split(",")]
        budgets = None
    elif "tiers" in cfg:
        eps = [float(t["epsilon"]) for t in cfg["tiers"]]
        budgets = [Money(int(t["budget_minor"])) for t in cfg["tiers"] if "budget_minor" in t]
        budgets = budgets if len(budgets) == len(eps) else None
    else:
        raise InputError("no tiers given (use --tiers or a config 'tiers' list)")
    if budgets is None:
        budget = getattr(args, "budget", None) or cfg.get("budget", "10.00")
        budgets = [Money.parse(str(budget))] * len(eps)
    return tuple(ModelTier(k, e, b, delta) for k, (e, b) in enumerate(zip(eps, budgets), start=1))


def _loss(cfg: dict) -> LossSpec:
    return LossSpec(**cfg.get("loss", {}))


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg, _ = _load_config(args.config)
    seed = _pick(args, cfg, "seed", 0)
    out = Path(args.out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    tiers = _tiers(args, cfg) if (args.tiers or "tiers" in cfg) else None
    n = int(_pick(args, cfg, "owners", 20))
    d = int(_pick(args, cfg, "dim", 5))
    owners, eval_set = generate_owners(n, d, seed)
    write_dataset(out / "owners.csv", owners)
    write_eval_set(out / "eval.csv", eval_set)
    M = len(tiers) if tiers else int(cfg.get("models", 3))
    kind = _pick(args, cfg, "survey_kind", SurveyKind.INDEPENDENT_UNIFORM.value)
    total = int(_pick(args, cfg, "survey_total", 100))
    write_survey(out / "survey.csv", generate_survey(kind, M, total, seed + 1))
    print(f"wrote {n} owners, {len(eval_set)} eval rows and {total} survey points to {out}")
    return EXIT_OK


def _owners_and_eval(args, cfg, base):
    data = _path(args, cfg, base, "data")
    if data is None:
        raise InputError("no dataset given (use --data or config 'data')")
    owners = ingest_dataset(data)
    ev = _path(args, cfg, base, "eval")
    eval_set = ingest_eval_set(ev) if ev else None
    return owners, eval_set


def _tier_values(args, cfg, owners, eval_set, tier):
    ids = list(eligible_owners(owners, tier))
    pool = Dataset.from_owners(owners)
    in_sample = eval_set is None
    oracle = accuracy_oracle(pool, eval_set, _loss(cfg), in_sample=in_sample)
    if args.exact:
        return exact_shapley(ids, oracle)
    perms = int(_pick(args, cfg, "permutations", 50))
    return monte_carlo_shapley(ids, oracle, perms, int(_pick(args, cfg, "seed", 0)))


def cmd_value(args) -> int:
    cfg, base = _load_config(args.config)
    owners, eval_set = _owners_and_eval(args, cfg, base)
    tiers = _tiers(args, cfg)
    out = {}
    for tier in tiers:
        rep = _tier_values(args, cfg, owners, eval_set, tier)
        out[str(tier.index)] = {
            "method": rep.method,
            "permutations": rep.permutations_used,
            "values": {str(i): v for i, v in rep.as_dict().items()},
        }
    _dump(out, args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    cfg, base = _load_config(args.config)
    owners, eval_set = _owners_and_eval(args, cfg, base)
    tiers = _tiers(args, cfg)
    solver = Solver(_pick(args, cfg, "solver", Solver.PSEUDO_POLY_DP.value))
    alpha = float(cfg.get("guess_alpha", 0.5))
    out = {}
    for tier in tiers:
        rep = _tier_values(args, cfg, owners, eval_set, tier)
        values = [max(0.0, v) for v in rep.values]
        bc = base_compensation(values, tier.budget) if sum(values) > 0 else equal_split(len(values), tier.budget)
        basemap = dict(zip(rep.owners, bc))
        costs = eligible_owners([o for o in owners if o.id in basemap], tier, basemap)
        items = [CompItem(i, v, basemap[i], costs[i] - basemap[i]) for i, v in zip(rep.owners, values)]
        res = select(items, tier.budget, solver, alpha)
        out[str(tier.index)] = {
            "chosen": list(res.chosen),
            "total_value": res.total_value,
            "total_cost_minor": int(res.total_cost),
            "solver": res.solver.value,
        }
    _dump(out, args.out)
    return EXIT_OK


def cmd_price(args) -> int:
    cfg, base = _load_config(args.config)
    path = _path(args, cfg, base, "survey")
    if path is None:
        raise InputError("no survey given (use --survey or config 'survey')")
    survey = read_survey(path)
    tiers = _tiers(args, cfg)
    eps = [t.epsilon for t in tiers]
    results = price_all(survey, eps)
    out = {}
    for method, sched in results.items():
        revenue, ratio = revenue_and_affordability(sched, survey)
        out[method.value] = {
            "prices_exact": [str(Fraction(p)) for p in sched.prices],
            "prices_minor": [int(m) for m in sched.money_prices()],
            "revenue_exact": str(revenue),
            "affordability_exact": str(ratio),
            "feasible": sched.feasible,
        }
    best = results[PricingMethod.COMPLETE_DP]
    out["opt_table"] = [[None if v is None else str(v) for v in row] for row in best.opt_table or []]
    _dump(out, args.out)
    return EXIT_OK


def build_pipeline_config(args, cfg: dict) -> PipelineConfig:
    options = {
        "shapley_permutations": int(_pick(args, cfg, "permutations", 50)),
        "shapley_seed": int(_pick(args, cfg, "seed", 0)),
        "training_seed": int(_pick(args, cfg, "seed", 0)),
        "solver": Solver(_pick(args, cfg, "solver", Solver.PSEUDO_POLY_DP.value)),
    }
    for key in ("guess_alpha", "survey_size_hint", "alpha_opt", "utility_tolerance",
                "exact_shapley", "in_sample_utility", "reuse_first_tier_values"):
        if key in cfg:
            options[key] = cfg[key]
    return PipelineConfig(tiers=_tiers(args, cfg), loss=_loss(cfg), **options)


def cmd_run(args) -> int:
    cfg, base = _load_config(args.config)
    config = build_pipeline_config(args, cfg)
    owners, eval_set = _owners_and_eval(args, cfg, base)
    survey_path = _path(args, cfg, base, "survey")
    if survey_path is not None:
        survey = read_survey(survey_path)
    else:
        kind = _pick(args, cfg, "survey_kind", SurveyKind.INDEPENDENT_UNIFORM.value)
        total = int(cfg.get("survey_total", 100))
        survey = generate_survey(kind, len(config.tiers), total, config.shapley_seed + 1)
    if eval_set is None and not config.in_sample_utility:
        raise InputError("no evaluation set given (use --eval or set in_sample_utility)")
    report = run_pipeline(config, owners, eval_set, survey)
    out = _path(args, cfg, base, "out") or Path("report")
    paths = emit_report(report, out)
    print(f"revenue {report.opt_revenue.display()}, prices "
          f"{[m.display() for m in report.schedule.money_prices()]}; wrote {paths['report'].parent}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datamarket", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON config / run manifest")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--tiers", help="comma-separated tier epsilons, e.g. 1,2,3")
        p.add_argument("--budget", help="per-tier budget in major units, e.g. 25.00")
        if data:
            p.add_argument("--data", help="owners CSV")
            p.add_argument("--eval", help="evaluation CSV")
            p.add_argument("--permutations", type=int)
            p.add_argument("--exact", action="store_true", help="exact Shapley enumeration")

    p = sub.add_parser("gen", help="write synthetic owners, eval set and survey")
    common(p, data=False)
    p.add_argument("--owners", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--survey-kind", dest="survey_kind", choices=[k.value for k in SurveyKind])
    p.add_argument("--survey-total", dest="survey_total", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("value", help="Shapley values per tier")
    common(p)
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("select", help="budget-constrained owner selection per tier")
    common(p)
    p.add_argument("--solver", choices=[s.value for s in Solver])
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("price", help="revenue-maximizing arbitrage-free prices for a survey")
    common(p, data=False)
    p.add_argument("--survey")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("run", help="full pipeline and report")
    common(p)
    p.add_argument("--survey")
    p.add_argument("--solver", choices=[s.value for s in Solver])
    p.add_argument("--survey-kind", dest="survey_kind", choices=[k.value for k in SurveyKind])
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MarketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
