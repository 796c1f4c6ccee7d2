"""Deterministic discrete-event simulation of the query stream.

Each candidate is a single-server FIFO queue modeled by a busy-until
accumulator. Arrivals are evenly spaced within fixed windows (optionally
jittered). Routing sees waiting times that refresh only at tick boundaries,
so mid-tick decisions deliberately work from a stale snapshot. A query's
user-perceived wait is its queue delay plus its own service time; waits
above tau zero the realized quality but (by default) still incur cost,
since the request was dispatched.

Learning updates, when enabled, are applied at tick boundaries for the
queries routed since the previous tick:

  refined  true quality/length SGD steps plus an uncertainty update on the
           chosen arm
  binary   satisfied iff quality > 0.7 and wait < 15 s; policy-gradient
           step on the feedback net
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, GroundTruth, LLMCandidate, Query
from .errors import MissingGroundTruth
from .feedback import FeedbackNet
from .predictors import estimate_cost
from .router import (
    RouterConfig,
    RoutingDecision,
    routing_embedding,
    select,
    select_online,
)

SATISFACTION_QUALITY = 0.7
SATISFACTION_WAIT_S = 15.0


@dataclass
class SimConfig:
    arrival_rate: int = 100     # queries per window
    window: float = 10.0        # seconds
    tau: float = 30.0           # max tolerable wait, seconds
    tick: float = 10.0          # wait-snapshot refresh period, seconds
    seed: int = 42
    jitter: bool = False
    free_timeouts: bool = False

    def __post_init__(self):
        if self.arrival_rate <= 0 or self.window <= 0 or self.tau <= 0 or self.tick <= 0:
            raise ValueError("arrival_rate, window, tau and tick must be positive")


class QueueState:
    """Per-candidate busy-until accumulators plus a dispatch audit log."""

    def __init__(self, llm_ids):
        self.busy_until: dict[str, float] = {aid: 0.0 for aid in llm_ids}
        self.dispatches: dict[str, list[tuple[str, float]]] = {aid: [] for aid in llm_ids}

    def waiting_time(self, llm_id: str, now: float) -> float:
        return max(0.0, self.busy_until[llm_id] - now)

    def dispatch(self, llm_id: str, query_id: str, now: float,
                 service: float) -> tuple[float, float]:
        """FIFO-append a job; returns (queue delay, completion time)."""
        start = max(self.busy_until[llm_id], now)
        completion = start + service
        self.busy_until[llm_id] = completion
        self.dispatches[llm_id].append((query_id, completion))
        return start - now, completion

    def snapshot(self, now: float) -> dict[str, float]:
        return {aid: self.waiting_time(aid, now) for aid in self.busy_until}


def waiting_time(queue: QueueState, llm_id: str, now: float) -> float:
    return queue.waiting_time(llm_id, now)


def service_time(c: LLMCandidate, response_tokens: int) -> float:
    """Startup latency plus token generation time."""
    return c.init_latency + response_tokens / c.tokens_per_second


@dataclass
class QueryOutcome:
    query_id: str
    llm_id: str
    quality: float
    cost: float
    wait: float
    timed_out: bool
    arrival: float
    completion: float

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "llm_id": self.llm_id,
            "quality": self.quality,
            "cost_usd": self.cost,
            "wait_s": self.wait,
            "timed_out": self.timed_out,
            "arrival_s": self.arrival,
            "completion_s": self.completion,
        }


@dataclass
class SimResult:
    records: list[QueryOutcome] = field(default_factory=list)
    decisions: list[RoutingDecision] = field(default_factory=list)
    total_quality: float = 0.0
    total_cost: float = 0.0
    timeout_count: int = 0

    def summary(self) -> dict:
        return {
            "queries": len(self.records),
            "total_quality": self.total_quality,
            "total_cost": self.total_cost,
            "timeouts": self.timeout_count,
        }


def realized_cost(c: LLMCandidate, prompt_tokens: int, truth: GroundTruth) -> float:
    if truth.cost_usd is not None:
        return truth.cost_usd
    return estimate_cost(c, prompt_tokens, truth.response_tokens).total


def arrival_times(n: int, sim_cfg: SimConfig) -> np.ndarray:
    """Evenly spaced arrivals, arrival_rate per window; optional seeded jitter."""
    spacing = sim_cfg.window / sim_cfg.arrival_rate
    idx = np.arange(n)
    times = (idx // sim_cfg.arrival_rate) * sim_cfg.window + (idx % sim_cfg.arrival_rate) * spacing
    if sim_cfg.jitter:
        rng = np.random.default_rng(sim_cfg.seed)
        times = times + rng.uniform(0.0, spacing * 0.5, size=n)
    return times


def _check_rectangular(queries, active_ids) -> None:
    for q in queries:
        truth = q.ground_truth or {}
        for aid in active_ids:
            if aid not in truth:
                raise MissingGroundTruth(f"query {q.id} lacks ground truth for {aid}")


def _binary_reward(quality: float, wait: float) -> int:
    return 1 if (quality > SATISFACTION_QUALITY and wait < SATISFACTION_WAIT_S) else 0


def run_stream(queries, catalog: Catalog, router_cfg: RouterConfig,
               sim_cfg: SimConfig, *, projection=None,
               net: FeedbackNet | None = None, feedback: str | None = None,
               policy=None) -> SimResult:
    """Route a query stream through the simulated queues.

    feedback: None for a frozen evaluation run, "refined" for chosen-arm
    predictor/uncertainty updates, "binary" for policy-gradient updates of
    the feedback net (requires net). policy, if given, is a callable
    (query, waits, now) -> llm_id overriding the router (used for forced and
    random baselines). Deterministic for a given seed.
    """
    queries = list(queries)
    active_ids = catalog.active_ids()
    _check_rectangular(queries, active_ids)
    if feedback not in (None, "refined", "binary"):
        raise ValueError(f"unknown feedback mode {feedback!r}")
    if feedback == "binary" and net is None:
        raise ValueError("binary feedback needs a feedback net")

    queue = QueueState(active_ids)
    times = arrival_times(len(queries), sim_cfg)
    result = SimResult()
    snapshot = queue.snapshot(0.0)
    next_tick = sim_cfg.tick
    pending: list[tuple[Query, np.ndarray, str, float, float]] = []

    def apply_pending():
        nonlocal pending
        for q, e, chosen, quality, wait in pending:
            if feedback == "refined":
                arm = catalog.arm(chosen)
                truth = q.ground_truth[chosen]
                arm.quality.sgd_update(e, truth.quality, router_cfg.eta1)
                arm.length.sgd_update(e, truth.response_tokens, router_cfg.eta2)
                arm.uncertainty.update(e)
            else:  # binary
                reward = _binary_reward(quality, wait)
                chosen_idx = net.arm_ids.index(chosen)
                net.policy_update(e, chosen_idx, reward, router_cfg.eta3)
        pending = []

    for q, now in zip(queries, times):
        while now >= next_tick:
            if feedback is not None:
                apply_pending()
            snapshot = queue.snapshot(next_tick)
            next_tick += sim_cfg.tick

        e = routing_embedding(q, projection)
        if policy is not None:
            chosen = policy(q, dict(snapshot), now)
            decision = RoutingDecision(chosen=chosen, timestamp=now)
        elif net is not None:
            decision = select_online(q, catalog, router_cfg, snapshot, net,
                                     projection, now=now)
            chosen = decision.chosen
        else:
            decision = select(q, catalog, router_cfg, snapshot, projection, now=now)
            chosen = decision.chosen

        cand = catalog.candidate(chosen)
        truth = q.ground_truth[chosen]
        delay, completion = queue.dispatch(
            chosen, q.id, now, service_time(cand, truth.response_tokens))
        wait = completion - now  # queue delay + own service time
        timed_out = wait > sim_cfg.tau
        quality = 0.0 if timed_out else truth.quality
        cost = realized_cost(cand, q.prompt_tokens, truth)
        if timed_out and sim_cfg.free_timeouts:
            cost = 0.0

        result.records.append(QueryOutcome(
            query_id=q.id, llm_id=chosen, quality=quality, cost=cost,
            wait=wait, timed_out=timed_out, arrival=now, completion=completion))
        result.decisions.append(decision)
        if feedback is not None:
            # true (non-zeroed) quality feeds learning; the zeroed value is
            # an evaluation metric, the response itself was still produced
            pending.append((q, e, chosen, truth.quality, wait))

    if feedback is not None:
        apply_pending()

    result.total_quality = float(sum(r.quality for r in result.records))
    result.total_cost = float(sum(r.cost for r in result.records))
    result.timeout_count = sum(1 for r in result.records if r.timed_out)
    return result


def apply_feedback_loop(queries, result: SimResult, mode: str, catalog: Catalog,
                        router_cfg: RouterConfig, *, projection=None,
                        net: FeedbackNet | None = None,
                        scope: str = "chosen") -> None:
    """Replay a finished stream's outcomes as training signal.

    mode "refined" applies quality/length/uncertainty updates with the true
    outcomes, either to the chosen arm only (scope="chosen", the online
    setting) or to every active arm (scope="all", the offline setting,
    which needs rectangular ground truth). mode "binary" converts each
    outcome to a satisfaction bit and applies policy-gradient steps.
    """
    if mode not in ("refined", "binary"):
        raise ValueError(f"unknown feedback mode {mode!r}")
    if scope not in ("chosen", "all"):
        raise ValueError(f"unknown scope {scope!r}")
    if mode == "binary" and net is None:
        raise ValueError("binary feedback needs a feedback net")
    by_id = {q.id: q for q in queries}
    for rec in result.records:
        q = by_id[rec.query_id]
        e = routing_embedding(q, projection)
        if mode == "refined":
            arm_ids = catalog.active_ids() if scope == "all" else [rec.llm_id]
            for aid in arm_ids:
                truth = q.ground_truth[aid]
                arm = catalog.arm(aid)
                arm.quality.sgd_update(e, truth.quality, router_cfg.eta1)
                arm.length.sgd_update(e, truth.response_tokens, router_cfg.eta2)
                arm.uncertainty.update(e)
        else:
            truth = q.ground_truth[rec.llm_id]
            reward = _binary_reward(truth.quality, rec.wait)
            chosen_idx = net.arm_ids.index(rec.llm_id)
            net.policy_update(e, chosen_idx, reward, router_cfg.eta3)


def fit_offline(catalog: Catalog, queries, router_cfg: RouterConfig | None = None,
                *, projection=None) -> dict:
    """Batch-train every active arm from rectangular ground truth.

    Linear arms get the closed-form ridge fit; kNN arms get their exemplar
    sets. Every arm's uncertainty matrix absorbs every training embedding
    (full-information offline setting). Returns fit stats including the
    maximum per-query cost, a sensible cost_scale for the router config.
    """
    queries = list(queries)
    active = catalog.active()
    _check_rectangular(queries, [c.llm_id for c in active])
    X = np.asarray([routing_embedding(q, projection) for q in queries])
    max_cost = 0.0
    for cand in active:
        arm = catalog.arm(cand.llm_id)
        y_q = np.asarray([q.ground_truth[cand.llm_id].quality for q in queries])
        y_l = np.asarray([q.ground_truth[cand.llm_id].response_tokens for q in queries],
                         dtype=float)
        arm.quality.fit(X, y_q)
        arm.length.fit(X, y_l)
        for e in X:
            arm.uncertainty.update(e)
        costs = [realized_cost(cand, q.prompt_tokens, q.ground_truth[cand.llm_id])
                 for q in queries]
        max_cost = max(max_cost, max(costs, default=0.0))
    return {"queries": len(queries), "max_query_cost": max_cost}
