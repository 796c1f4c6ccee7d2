"""Benchmark harness: sweeps, reference baselines and comparison tables.

All curves for one report run the same test stream, seed and latency
config, so points are comparable. Evaluation runs never mutate router
state; each point starts from the same trained snapshot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog
from .errors import EmptyInput, KTooLarge, UnknownReference
from .router import RouterConfig, score_candidates
from .simulation import SimConfig, SimResult, realized_cost, run_stream

logger = logging.getLogger(__name__)

CSV_HEADER = ["lambda", "total_quality", "total_cost", "timeouts",
              "quality_frac", "cost_frac"]


@dataclass
class CurvePoint:
    lam: float | None
    total_quality: float
    total_cost: float
    timeout_count: int
    quality_vs_reference: float | None = None
    cost_vs_reference: float | None = None
    label: str = ""


def default_lambda_grid(n: int = 25) -> np.ndarray:
    """Log-spaced willingness-to-pay values spanning 1e-6 .. 1e6."""
    return np.logspace(-6.0, 6.0, n)


def _point_from_result(result: SimResult, lam: float | None, label: str = ""
                       ) -> CurvePoint:
    return CurvePoint(
        lam=lam,
        total_quality=result.total_quality,
        total_cost=result.total_cost,
        timeout_count=result.timeout_count,
        label=label,
    )


def _with_fractions(points: list[CurvePoint], reference: CurvePoint
                    ) -> list[CurvePoint]:
    for p in points:
        p.quality_vs_reference = (
            p.total_quality / reference.total_quality
            if reference.total_quality else None)
        p.cost_vs_reference = (
            p.total_cost / reference.total_cost if reference.total_cost else None)
    return points


def most_expensive_id(queries, catalog: Catalog) -> str:
    """Default reference: the active candidate with the largest total cost."""
    totals = {}
    for cand in catalog.active():
        totals[cand.llm_id] = sum(
            realized_cost(cand, q.prompt_tokens, q.ground_truth[cand.llm_id])
            for q in queries)
    return max(totals, key=lambda aid: (totals[aid], aid))


def single_llm_points(queries, catalog: Catalog, router_cfg: RouterConfig,
                      sim_cfg: SimConfig) -> list[CurvePoint]:
    """One stream run per candidate with everything forced to it."""
    points = []
    for cand in catalog.active():
        result = run_stream(queries, catalog, router_cfg, sim_cfg,
                            policy=lambda q, waits, now, aid=cand.llm_id: aid)
        points.append(_point_from_result(result, None, label=cand.llm_id))
    return points


def random_baseline(queries, catalog: Catalog, router_cfg: RouterConfig,
                    sim_cfg: SimConfig, seed: int = 42) -> CurvePoint:
    """Uniform random routing through the same simulated queues."""
    rng = np.random.default_rng(seed)
    ids = catalog.active_ids()
    result = run_stream(queries, catalog, router_cfg, sim_cfg,
                        policy=lambda q, waits, now: ids[rng.integers(len(ids))])
    return _point_from_result(result, None, label="random")


def sweep_lambda(queries, catalog: Catalog, router_cfg: RouterConfig,
                 sim_cfg: SimConfig, lambdas=None, *, projection=None,
                 reference_id: str | None = None) -> list[CurvePoint]:
    """One frozen-evaluation stream run per willingness-to-pay value.

    Fractions are taken against the reference candidate's forced run on the
    identical stream (the most expensive candidate unless overridden).
    """
    queries = list(queries)
    if lambdas is None:
        lambdas = default_lambda_grid()
    if reference_id is None:
        reference_id = most_expensive_id(queries, catalog)
    if reference_id not in catalog.active_ids():
        raise UnknownReference(f"reference {reference_id!r} is not an active candidate")
    ref_result = run_stream(queries, catalog, router_cfg, sim_cfg,
                            policy=lambda q, waits, now: reference_id)
    reference = _point_from_result(ref_result, None, label=reference_id)
    points = []
    for lam in lambdas:
        cfg = router_cfg.replace(lam=float(lam))
        result = run_stream(queries, catalog, cfg, sim_cfg, projection=projection)
        points.append(_point_from_result(result, float(lam)))
    return _with_fractions(points, reference)


def oracle_curve(queries, catalog: Catalog, quality_threshold: float = 0.9
                 ) -> CurvePoint:
    """Per query, the cheapest candidate meeting the quality threshold.

    Ties on cost prefer higher quality, then catalog order. If nothing
    qualifies, take the highest quality (cheapest among equals). Latency-free
    by construction: the oracle already knows every outcome.
    """
    total_q = 0.0
    total_c = 0.0
    active = catalog.active()
    for q in queries:
        rows = []
        for idx, cand in enumerate(active):
            t = q.ground_truth[cand.llm_id]
            rows.append((t.quality, realized_cost(cand, q.prompt_tokens, t), idx))
        qualifying = [r for r in rows if r[0] >= quality_threshold]
        if qualifying:
            pick = min(qualifying, key=lambda r: (r[1], -r[0], r[2]))
        else:
            pick = min(rows, key=lambda r: (-r[0], r[1], r[2]))
        total_q += pick[0]
        total_c += pick[1]
    return CurvePoint(lam=None, total_quality=total_q, total_cost=total_c,
                      timeout_count=0, label="oracle")


def score_only_run(queries, catalog: Catalog, router_cfg: RouterConfig, *,
                   projection=None, k: int = 1) -> tuple[CurvePoint, list[list[str]]]:
    """Latency-disabled evaluation: rank candidates per query with idle
    waits and take the top k. Quality is the best chosen outcome, cost the
    sum over chosen candidates. Returns the point and per-query choices."""
    active = catalog.active()
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(active):
        raise KTooLarge(f"k={k} but only {len(active)} active candidates")
    by_id = {c.llm_id: c for c in active}
    total_q = 0.0
    total_c = 0.0
    chosen_lists = []
    for q in queries:
        scores = score_candidates(q, catalog, router_cfg, None, projection)
        finals = np.asarray([s.s_final for s in scores])
        order = np.argsort(-finals, kind="stable")[:k]
        chosen = [scores[i].llm_id for i in order]
        chosen_lists.append(chosen)
        truths = [(q.ground_truth[aid], by_id[aid]) for aid in chosen]
        total_q += max(t.quality for t, _ in truths)
        total_c += sum(realized_cost(c, q.prompt_tokens, t) for t, c in truths)
    point = CurvePoint(lam=router_cfg.lam, total_quality=total_q,
                       total_cost=total_c, timeout_count=0, label=f"top{k}")
    return point, chosen_lists


def topk_policy(queries, catalog: Catalog, router_cfg: RouterConfig, k: int, *,
                projection=None) -> CurvePoint:
    """Dispatch each query to its k best-scoring candidates."""
    point, _ = score_only_run(queries, catalog, router_cfg,
                              projection=projection, k=k)
    return point


def match_lambda_to_cost(run_at, target_cost: float, base_lam: float,
                         tolerance: float = 0.02, iterations: int = 18
                         ) -> tuple[float, float]:
    """Bisect lambda (log-space) until run_at(lam) costs within tolerance of
    target. Cost is monotone non-decreasing in lambda for a fixed stream, so
    plain bisection suffices; returns the closest (lam, cost) found."""
    if target_cost <= 0:
        return base_lam, run_at(base_lam)

    def rel_err(cost):
        return abs(cost - target_cost) / target_cost

    lam = base_lam
    cost = run_at(lam)
    best = (lam, cost)
    if rel_err(cost) <= tolerance:
        return best
    lo, hi = np.log10(base_lam), np.log10(base_lam)
    step = 1.0
    if cost < target_cost:
        while cost < target_cost and hi < 7.0:
            hi += step
            cost = run_at(10.0**hi)
            if rel_err(cost) < rel_err(best[1]):
                best = (10.0**hi, cost)
    else:
        while cost > target_cost and lo > -7.0:
            lo -= step
            cost = run_at(10.0**lo)
            if rel_err(cost) < rel_err(best[1]):
                best = (10.0**lo, cost)
    for _ in range(iterations):
        mid = (lo + hi) / 2.0
        cost = run_at(10.0**mid)
        if rel_err(cost) < rel_err(best[1]):
            best = (10.0**mid, cost)
        if rel_err(best[1]) <= tolerance:
            break
        if cost < target_cost:
            lo = mid
        else:
            hi = mid
    return best


def continual_experiment(queries, catalog_factory, router_cfg: RouterConfig,
                         sim_cfg: SimConfig, ratios=((80, 20), (50, 50), (30, 70)),
                         *, projection=None, test_fraction: float = 0.2,
                         net_seed: int = 0, cost_tolerance: float = 0.02
                         ) -> list[dict]:
    """Offline-only vs refined-online vs binary-online, per offline:online ratio.

    Queries are a time-ordered stream: the trailing test_fraction is the
    evaluation stream, the rest is training, split positionally by each
    ratio. Every mode trains a fresh catalog (catalog_factory) offline, runs
    its online phase, then is evaluated frozen on the identical test stream.
    When a mode's evaluation cost drifts more than cost_tolerance from the
    offline-only run, its evaluation lambda is retuned to match, so quality
    differences reflect the feedback, not the budget.
    """
    from .feedback import FeedbackNet
    from .simulation import fit_offline

    queries = list(queries)
    n_test = int(round(len(queries) * test_fraction))
    train, test = queries[: len(queries) - n_test], queries[len(queries) - n_test:]
    rows = []
    for off_part, on_part in ratios:
        n_off = int(round(len(train) * off_part / (off_part + on_part)))
        offline, online = train[:n_off], train[n_off:]
        row: dict = {"ratio": f"{off_part}:{on_part}",
                     "offline_queries": len(offline), "online_queries": len(online),
                     "test_queries": len(test)}

        def evaluate(catalog, lam, net=None):
            cfg = router_cfg.replace(lam=lam)
            return run_stream(test, catalog, cfg, sim_cfg,
                              projection=projection, net=net)

        ref_cost = None
        for mode in ("none", "refined", "binary"):
            catalog = catalog_factory()
            fit_offline(catalog, offline, projection=projection)
            net = None
            if mode == "refined":
                run_stream(online, catalog, router_cfg, sim_cfg,
                           projection=projection, feedback="refined")
            elif mode == "binary":
                net = FeedbackNet(catalog.d_route, catalog.active_ids(),
                                  df_window=router_cfg.df_window, seed=net_seed)
                run_stream(online, catalog, router_cfg, sim_cfg,
                           projection=projection, net=net, feedback="binary")

            lam = router_cfg.lam
            result = evaluate(catalog, lam, net)
            if ref_cost is None:
                ref_cost = result.total_cost
            elif ref_cost > 0 and abs(result.total_cost - ref_cost) / ref_cost > cost_tolerance:
                lam, _ = match_lambda_to_cost(
                    lambda l: evaluate(catalog, l, net).total_cost,
                    ref_cost, router_cfg.lam, tolerance=cost_tolerance)
                result = evaluate(catalog, lam, net)

            key = {"none": "no_online", "refined": "refined", "binary": "binary"}[mode]
            row[key] = result.total_quality / max(len(test), 1)
            row[f"{key}_cost"] = result.total_cost
            row[f"{key}_lambda"] = lam
        rows.append(row)
    return rows


def report(points: list[CurvePoint], single_points: list[CurvePoint],
           reference_llm_id: str) -> dict:
    """Fractions against a named single-candidate reference plus the best
    trade-off point (max quality fraction among points cheaper than it)."""
    if not points:
        raise EmptyInput("no points to report on")
    reference = next((p for p in single_points if p.label == reference_llm_id), None)
    if reference is None:
        raise UnknownReference(f"{reference_llm_id!r} not among the single-LLM points")
    _with_fractions(points, reference)
    cheaper = [p for p in points
               if p.cost_vs_reference is not None and p.cost_vs_reference < 1.0]
    best = max(cheaper, key=lambda p: p.quality_vs_reference) if cheaper else None
    return {
        "reference": reference_llm_id,
        "reference_quality": reference.total_quality,
        "reference_cost": reference.total_cost,
        "points": [point_row(p) for p in points],
        "best_tradeoff": point_row(best) if best else None,
    }


def point_row(p: CurvePoint) -> dict:
    return {
        "lambda": p.lam,
        "label": p.label,
        "total_quality": p.total_quality,
        "total_cost": p.total_cost,
        "timeouts": p.timeout_count,
        "quality_frac": p.quality_vs_reference,
        "cost_frac": p.cost_vs_reference,
    }


def write_curve_csv(path, points: list[CurvePoint]) -> None:
    """Fixed-schema CSV: lambda,total_quality,total_cost,timeouts,quality_frac,cost_frac."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for p in points:
            writer.writerow([
                "" if p.lam is None else repr(p.lam),
                repr(p.total_quality),
                repr(p.total_cost),
                p.timeout_count,
                "" if p.quality_vs_reference is None else repr(p.quality_vs_reference),
                "" if p.cost_vs_reference is None else repr(p.cost_vs_reference),
            ])


def read_curve_csv(path) -> list[CurvePoint]:
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            points.append(CurvePoint(
                lam=float(row["lambda"]) if row["lambda"] else None,
                total_quality=float(row["total_quality"]),
                total_cost=float(row["total_cost"]),
                timeout_count=int(row["timeouts"]),
                quality_vs_reference=(float(row["quality_frac"])
                                      if row["quality_frac"] else None),
                cost_vs_reference=(float(row["cost_frac"])
                                   if row["cost_frac"] else None),
            ))
    return points
