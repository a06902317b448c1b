"""Flat-file ingestion, synthetic generators and report emission."""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Curve, DataOwner, Dataset, Money, Restriction, SurveyPoint, largest_remainder
from .errors import InvalidLabel, ParseError

OWNER_COLUMNS = ("id", "label", "eps_prefer", "curve", "rho", "mode")
SURVEY_COLUMNS = ("target_model", "bid_minor", "bid")
PRICE_COLUMNS = (
    "tier", "epsilon", "price_minor", "price", "price_exact", "demand", "buyers",
    "revenue_minor", "revenue", "affordability", "zero_demand",
)
COMP_COLUMNS = ("owner_id", "tier", "base_minor", "extra_minor", "total_minor", "total")


# -- ingestion ------------------------------------------------------------------


def _read_rows(path: str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not any(h.strip() for h in header):
            raise ParseError(f"{path}: missing header", row=1)
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    return [h.strip() for h in header], rows


def _number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", row=row, column=column)
    return value


def _label(text: str, row: int, task: str) -> float:
    value = _number(text, row, "label")
    if task == "classification":
        if value not in (-1.0, 1.0, 0.0):
            raise InvalidLabel(f"label {text!r} is not a class label", row=row, column="label")
        return 1.0 if value == 1.0 else -1.0
    return value


def ingest_dataset(path: str | os.PathLike, task: str = "classification") -> list[DataOwner]:
    """Read owners from a CSV with a header row.

    Columns ``label`` and ``eps_prefer`` are required; ``id``, ``curve``,
    ``rho`` (one rate or a ``;``-separated per-tier list) and ``mode`` are
    optional.  Every other column is a feature, in header order.  Labels
    ``0`` and ``-1`` both mean the negative class under classification.
    Row numbers in errors count the header as row 1.
    """
    header, rows = _read_rows(path)
    for required in ("label", "eps_prefer"):
        if required not in header:
            raise ParseError(f"{path}: missing column {required!r}", row=1, column=required)
    features = [k for k, h in enumerate(header) if h not in OWNER_COLUMNS]
    if not features:
        raise ParseError(f"{path}: no feature columns", row=1)
    col = {h: k for k, h in enumerate(header)}
    owners = []
    seen: set[int] = set()
    for r, cells in enumerate(rows, start=2):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", row=r)

        def get(name: str, default: str) -> str:
            return cells[col[name]].strip() if name in col else default

        x = tuple(_number(cells[k], r, header[k]) for k in features)
        try:
            owner_id = int(get("id", str(r - 2)))
            rho = tuple(_number(v, r, "rho") for v in get("rho", "0").split(";"))
            owner = DataOwner(
                id=owner_id,
                features=x,
                label=_label(cells[col["label"]], r, task),
                eps_prefer=_number(cells[col["eps_prefer"]], r, "eps_prefer"),
                curve=Curve(get("curve", "linear").lower()),
                rho=rho,
                mode=Restriction(get("mode", "hard").lower()),
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), row=r) from None
        except Exception as exc:  # domain validation from DataOwner
            raise ParseError(str(exc), row=r) from None
        if owner.id in seen:
            raise ParseError(f"duplicate owner id {owner.id}", row=r, column="id")
        seen.add(owner.id)
        owners.append(owner)
    return owners


def ingest_eval_set(path: str | os.PathLike, task: str = "classification") -> Dataset:
    """Read a labeled evaluation set; owner-only columns are ignored."""
    header, rows = _read_rows(path)
    if "label" not in header:
        raise ParseError(f"{path}: missing column 'label'", row=1, column="label")
    features = [k for k, h in enumerate(header) if h not in OWNER_COLUMNS]
    li = header.index("label")
    X, y = [], []
    for r, cells in enumerate(rows, start=2):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", row=r)
        X.append([_number(cells[k], r, header[k]) for k in features])
        y.append(_label(cells[li], r, task))
    return Dataset(np.array(X, dtype=float).reshape(len(X), len(features)), np.array(y, dtype=float))


def write_dataset(path: str | os.PathLike, owners: Sequence[DataOwner]) -> None:
    d = len(owners[0].features) if owners else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *(f"x{k}" for k in range(d)), "label", "eps_prefer", "curve", "rho", "mode"])
        for o in owners:
            w.writerow([
                o.id, *(repr(v) for v in o.features), repr(o.label), repr(o.eps_prefer),
                o.curve.value, ";".join(repr(r) for r in o.rho), o.mode.value,
            ])


def write_eval_set(path: str | os.PathLike, data: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*(f"x{k}" for k in range(data.dim)), "label"])
        for x, y in zip(data.X, data.y):
            w.writerow([*(repr(float(v)) for v in x), repr(float(y))])


def read_survey(path: str | os.PathLike) -> list[SurveyPoint]:
    """Survey CSV with ``target_model`` and either ``bid_minor`` or a decimal ``bid``."""
    header, rows = _read_rows(path)
    if "target_model" not in header or not ({"bid_minor", "bid"} & set(header)):
        raise ParseError(f"{path}: need target_model and bid_minor or bid columns", row=1)
    col = {h: k for k, h in enumerate(header)}
    out = []
    for r, cells in enumerate(rows, start=2):
        try:
            tier = int(cells[col["target_model"]])
            if "bid_minor" in col:
                bid = Money(int(cells[col["bid_minor"]]))
            else:
                bid = Money.parse(cells[col["bid"]])
            out.append(SurveyPoint(tier, bid))
        except (ValueError, TypeError, IndexError) as exc:
            raise ParseError(str(exc), row=r) from None
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(str(exc), row=r) from None
    return out


def write_survey(path: str | os.PathLike, survey: Sequence[SurveyPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SURVEY_COLUMNS)
        for p in survey:
            w.writerow([p.target_model, int(p.bid), p.bid.display()])


# -- generators -----------------------------------------------------------------


class SurveyKind(str, enum.Enum):
    INDEPENDENT_UNIFORM = "uniform"
    GAUSSIAN_COUNTS = "gaussian"


def survey_counts(kind: SurveyKind | str, M: int, total: int, rng: np.random.Generator) -> list[int]:
    """Number of survey points per tier.

    ``uniform`` draws each point's tier independently and uniformly.
    ``gaussian`` draws one Normal(5, 3) weight per tier, clips at zero and
    rescales to ``total`` with largest-remainder rounding; if every weight
    clips, it falls back to equal weights.
    """
    kind = SurveyKind(kind)
    if M < 1 or total < 1:
        raise ValueError("M and total must be at least 1")
    if kind is SurveyKind.INDEPENDENT_UNIFORM:
        return np.bincount(rng.integers(0, M, size=total), minlength=M).tolist()
    weights = np.maximum(rng.normal(5.0, 3.0, size=M), 0.0)
    if weights.sum() == 0:
        weights = np.ones(M)
    exact = [Fraction(float(w)) for w in weights]
    norm = sum(exact)
    return largest_remainder([w / norm * total for w in exact], total)


def bid_range(tier: int, low: int = 1000, high: int = 5000, step: int = 100) -> tuple[Money, Money]:
    """Inclusive bid range for a 1-based tier, in whole major units shifted by ``step`` per tier."""
    shift = step * (tier - 1)
    return Money((low + shift) * 100), Money((high + shift) * 100)


def generate_survey(kind: SurveyKind | str, M: int, total: int, seed: int) -> list[SurveyPoint]:
    """Synthetic survey: tier counts by ``kind``, bids uniform over minor units in :func:`bid_range`."""
    rng = np.random.default_rng(seed)
    counts = survey_counts(kind, M, total, rng)
    out = []
    for m, c in enumerate(counts, start=1):
        lo, hi = bid_range(m)
        for bid in rng.integers(int(lo), int(hi) + 1, size=c):
            out.append(SurveyPoint(m, Money(int(bid))))
    return out


def synthetic_classification(n: int, d: int, seed: int, flip: float = 0.05) -> Dataset:
    """Linearly separable-ish data with ``||x|| <= 1`` and labels in {-1, +1}.

    Labels follow a random unit hyperplane through the origin; a ``flip``
    fraction of them is inverted to add noise.
    """
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(d)
    w_true /= np.linalg.norm(w_true)
    X = rng.standard_normal((n, d))
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
    y = np.where(X @ w_true >= 0, 1.0, -1.0)
    flips = rng.random(n) < flip
    y[flips] *= -1
    return Dataset(X, y)


def generate_owners(
    n: int,
    d: int,
    seed: int,
    eps_range: tuple[float, float] = (0.5, 10.0),
    negotiable_share: float = 0.5,
    rho_max: float = 0.2,
    flip: float = 0.05,
) -> tuple[list[DataOwner], Dataset]:
    """Synthetic owners plus a held-out evaluation set drawn from the same task.

    Preferences are uniform on ``eps_range`` rounded to two decimals; curves
    are uniform over the three kinds.
    """
    rng = np.random.default_rng(seed)
    data = synthetic_classification(2 * n, d, int(rng.integers(2**31)), flip)
    curves = list(Curve)
    owners = []
    for k in range(n):
        owners.append(DataOwner(
            id=k,
            features=tuple(float(v) for v in data.X[k]),
            label=float(data.y[k]),
            eps_prefer=round(float(rng.uniform(*eps_range)), 2),
            curve=curves[int(rng.integers(len(curves)))],
            rho=round(float(rng.uniform(0, rho_max)), 3),
            mode=Restriction.NEGOTIABLE if rng.random() < negotiable_share else Restriction.HARD,
        ))
    return owners, Dataset(data.X[n:], data.y[n:])


# -- report emission ------------------------------------------------------------


def _frac(x: Fraction) -> str:
    return str(Fraction(x))


def report_to_dict(report) -> dict:
    """Plain JSON-ready view of a :class:`~datamarket.pipeline.MarketReport`."""
    tiers = []
    for t in report.tiers:
        entry = {
            "tier": t.tier.index,
            "epsilon": t.tier.epsilon,
            "delta": t.tier.delta,
            "budget_minor": int(t.tier.budget),
            "eligible": list(t.eligible),
            "chosen": list(t.chosen),
            "trained": t.trained,
            "price_exact": _frac(t.price),
            "price_minor": int(Money.floor(t.price)),
            "demand": t.demand,
            "buyers": t.buyers,
            "revenue_exact": _frac(t.revenue),
            "excess_loss": t.excess_loss,
            "test_accuracy": t.test_accuracy,
            "base_minor": {str(i): int(v) for i, v in sorted(t.base.items())},
            "extra_minor": {str(i): int(v) for i, v in sorted(t.extra.items())},
        }
        if t.shapley is not None:
            entry["shapley"] = {
                "method": t.shapley.method,
                "permutations": t.shapley.permutations_used,
                "seed": t.shapley.seed,
                "values": {str(i): v for i, v in sorted(t.shapley.as_dict().items())},
            }
        if t.selection is not None:
            entry["selection"] = {
                "solver": t.selection.solver.value,
                "total_value": t.selection.total_value,
                "total_cost_minor": int(t.selection.total_cost),
            }
        if t.model is not None:
            entry["model"] = {
                "weights": [float(w) for w in t.model.weights],
                "sigma1": t.model.sigma1,
                "sigma2": t.model.sigma2,
                "alpha": t.model.alpha,
                "seed": t.model.seed,
                "iterations": t.model.iterations,
            }
        tiers.append(entry)
    alloc = report.allocation
    return {
        "tiers": tiers,
        "prices_exact": [_frac(p) for p in report.schedule.prices],
        "pricing_feasible": report.schedule.feasible,
        "zero_demand_tiers": list(report.schedule.zero_demand),
        "revenue_exact": _frac(report.revenue),
        "opt_revenue_minor": int(report.opt_revenue),
        "opt_revenue": report.opt_revenue.display(),
        "affordability_exact": _frac(report.affordability),
        "method_revenues_exact": {k: _frac(v) for k, v in sorted(report.method_revenues.items())},
        "budget_total_minor": int(report.budget_total),
        "budget_deficit_minor": report.deficit,
        "pools_minor": [int(p) for p in alloc.pools],
        "retained_minor": int(alloc.retained),
        "distributed_minor": int(alloc.distributed),
        "compensation": {
            str(i): {
                "base_minor": int(rec.base),
                "extra_minor": int(rec.extra),
                "total_minor": int(rec.total),
                "per_tier": {str(m): [int(b), int(e)] for m, (b, e) in sorted(rec.per_tier.items())},
            }
            for i, rec in alloc.records.items()
        },
    }


def price_rows(report) -> list[dict]:
    rows = []
    zero = set(report.schedule.zero_demand)
    for t in report.tiers:
        ratio = Fraction(t.buyers, t.demand) if t.demand else Fraction(0)
        rows.append({
            "tier": t.tier.index,
            "epsilon": repr(t.tier.epsilon),
            "price_minor": int(Money.floor(t.price)),
            "price": Money.floor(t.price).display(),
            "price_exact": _frac(t.price),
            "demand": t.demand,
            "buyers": t.buyers,
            "revenue_minor": int(Money.floor(t.revenue)),
            "revenue": Money.floor(t.revenue).display(),
            "affordability": _frac(ratio),
            "zero_demand": int(t.tier.index in zero),
        })
    return rows


def compensation_rows(report) -> list[dict]:
    rows = []
    for i, rec in report.allocation.records.items():
        for m, (b, e) in sorted(rec.per_tier.items()):
            total = b + e
            rows.append({
                "owner_id": i, "tier": m, "base_minor": int(b), "extra_minor": int(e),
                "total_minor": int(total), "total": total.display(),
            })
    return rows


def _write_table(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def emit_report(report, out_dir: str | os.PathLike) -> dict[str, Path]:
    """Write ``report.json``, ``prices.csv`` and ``compensation.csv`` into ``out_dir``.

    Output is byte-stable: keys are sorted and floats use ``repr``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "prices": out / "prices.csv",
        "compensation": out / "compensation.csv",
    }
    with open(paths["report"], "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_table(paths["prices"], PRICE_COLUMNS, price_rows(report))
    _write_table(paths["compensation"], COMP_COLUMNS, compensation_rows(report))
    return paths


def read_price_table(path: str | os.PathLike) -> list[dict]:
    """Parse ``prices.csv`` back into typed values."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{
        "tier": int(r["tier"]),
        "epsilon": float(r["epsilon"]),
        "price_minor": int(r["price_minor"]),
        "price_exact": Fraction(r["price_exact"]),
        "demand": int(r["demand"]),
        "buyers": int(r["buyers"]),
        "revenue_minor": int(r["revenue_minor"]),
        "affordability": Fraction(r["affordability"]),
        "zero_demand": bool(int(r["zero_demand"])),
    } for r in rows]


def read_compensation_table(path: str | os.PathLike) -> dict[int, dict[int, tuple[Money, Money]]]:
    """Parse ``compensation.csv`` into ``owner -> tier -> (base, extra)``."""
    out: dict[int, dict[int, tuple[Money, Money]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(int(r["owner_id"]), {})[int(r["tier"])] = (
                Money(int(r["base_minor"])), Money(int(r["extra_minor"]))
            )
    return out
