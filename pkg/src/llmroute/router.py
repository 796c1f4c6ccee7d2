"""Meta decision maker: scores every active candidate and picks the best.

The final score per candidate is

    s = s_trade + alpha * s_unc - beta * s_pen

where s_trade balances predicted quality against normalized predicted cost
via the willingness-to-pay lambda, s_unc is the information-matrix
quadratic form, and s_pen = exp(gamma * (wait - xi * tau)) grows as a
candidate's backlog approaches the tolerable wait. The online variant adds
a confidence-weighted correction from the shared feedback net.

Costs entering s_trade are divided by cost_scale to put dollars on the same
footing as [0,1] quality; pick cost_scale near the maximum per-query cost
of the training set.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .catalog import Catalog, LLMCandidate, Query, validate_query
from .embedding import ProjectionModel, normalize, project
from .errors import NoActiveCandidates, WidthMismatch
from .feedback import FeedbackNet, df_scores
from .predictors import estimate_cost, predict_length, predict_quality
from .uncertainty import ArmUncertainty

logger = logging.getLogger(__name__)

_PENALTY_EXP_CAP = 50.0

_CONFIG_KEYS = {
    "alpha": "alpha",
    "beta": "beta",
    "gamma": "gamma",
    "xi": "xi",
    "tau_s": "tau",
    "lambda": "lam",
    "epsilon": "epsilon",
    "eta3": "eta3",
    "df_window": "df_window",
    "cost_scale": "cost_scale",
}


@dataclass
class RouterConfig:
    alpha: float = 0.01
    beta: float = 0.1
    gamma: float = 0.1
    xi: float = 0.5
    tau: float = 30.0
    lam: float = 1.0
    epsilon: float = 1e-6
    eta3: float = 0.001
    df_window: int = 50
    cost_scale: float = 1.0
    eta1: float = 1.0
    eta2: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must be in (0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.cost_scale <= 0:
            raise ValueError("cost_scale must be > 0")

    def replace(self, **kwargs) -> "RouterConfig":
        d = asdict(self)
        d.update(kwargs)
        return RouterConfig(**d)

    @classmethod
    def from_file(cls, path) -> "RouterConfig":
        with open(path) as fh:
            raw = json.load(fh)
        kwargs = {attr: raw[key] for key, attr in _CONFIG_KEYS.items() if key in raw}
        for extra in ("eta1", "eta2"):
            if extra in raw:
                kwargs[extra] = raw[extra]
        return cls(**kwargs)

    def to_file(self, path) -> None:
        raw = {key: getattr(self, attr) for key, attr in _CONFIG_KEYS.items()}
        raw["eta1"] = self.eta1
        raw["eta2"] = self.eta2
        with open(path, "w") as fh:
            json.dump(raw, fh, indent=2, sort_keys=True)


@dataclass
class ScoreBreakdown:
    """Every component that went into one candidate's final score."""

    llm_id: str
    s_trade: float
    s_unc: float
    s_pen: float
    s_final: float
    s_df: float | None = None
    kappa: float | None = None

    def to_dict(self) -> dict:
        d = {
            "llm_id": self.llm_id,
            "s_trade": self.s_trade,
            "s_unc": self.s_unc,
            "s_pen": self.s_pen,
            "s_final": self.s_final,
        }
        if self.s_df is not None:
            d["s_df"] = self.s_df
            d["kappa"] = self.kappa
        return d


@dataclass
class RoutingDecision:
    chosen: str
    scores: list[ScoreBreakdown] = field(default_factory=list)
    timestamp: float = 0.0

    def breakdown(self, llm_id: str) -> ScoreBreakdown:
        for s in self.scores:
            if s.llm_id == llm_id:
                return s
        raise KeyError(llm_id)

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "timestamp": self.timestamp,
            "scores": [s.to_dict() for s in self.scores],
        }


def trade_score(p_hat: float, c_hat: float, lam: float) -> float:
    """Quality/cost trade-off: lam/(lam+1) * p_hat - 1/(lam+1) * c_hat."""
    return (lam / (lam + 1.0)) * p_hat - (1.0 / (lam + 1.0)) * c_hat


def uncertainty_score(arm: ArmUncertainty, e: np.ndarray) -> float:
    return arm.score(e)


def update_uncertainty(arm: ArmUncertainty, e: np.ndarray) -> ArmUncertainty:
    return arm.update(e)


def latency_penalty(wait: float, cfg: RouterConfig) -> float:
    """exp(gamma * (wait - xi * tau)), exponent capped at 50."""
    exponent = min(cfg.gamma * (wait - cfg.xi * cfg.tau), _PENALTY_EXP_CAP)
    return math.exp(exponent)


def routing_embedding(q: Query, projection: ProjectionModel | None = None
                      ) -> np.ndarray:
    """Project the query's base embedding, or just normalize it when no
    projection was trained (identity routing space)."""
    if projection is None:
        return normalize(q.base_embedding)
    return project(projection, q.base_embedding)


def decision_score(e: np.ndarray, prompt_tokens: int, candidate: LLMCandidate,
                   arm, wait: float, cfg: RouterConfig) -> ScoreBreakdown:
    """Score one candidate for one query; arm is its catalog ArmState."""
    p_hat = predict_quality(arm.quality, e)
    len_hat = predict_length(arm.length, e)
    c_hat = estimate_cost(candidate, prompt_tokens, len_hat).total / cfg.cost_scale
    s_trade = trade_score(p_hat, c_hat, cfg.lam)
    s_unc = uncertainty_score(arm.uncertainty, e)
    s_pen = latency_penalty(wait, cfg)
    s_final = s_trade + cfg.alpha * s_unc - cfg.beta * s_pen
    return ScoreBreakdown(
        llm_id=candidate.llm_id,
        s_trade=s_trade,
        s_unc=s_unc,
        s_pen=s_pen,
        s_final=s_final,
    )


def score_candidates(q: Query, catalog: Catalog, cfg: RouterConfig,
                     waits: dict[str, float] | None = None,
                     projection: ProjectionModel | None = None,
                     ) -> list[ScoreBreakdown]:
    validate_query(q, catalog)
    active = catalog.active()
    if not active:
        raise NoActiveCandidates("no active candidates to route to")
    waits = waits or {}
    e = routing_embedding(q, projection)
    return [
        decision_score(e, q.prompt_tokens, c, catalog.arm(c.llm_id),
                       waits.get(c.llm_id, 0.0), cfg)
        for c in active
    ]


def _argmax_decision(scores: list[ScoreBreakdown], now: float) -> RoutingDecision:
    # strict > keeps the earliest (lowest catalog index) winner on exact ties
    best = 0
    for i in range(1, len(scores)):
        if scores[i].s_final > scores[best].s_final:
            best = i
    return RoutingDecision(chosen=scores[best].llm_id, scores=scores, timestamp=now)


def select(q: Query, catalog: Catalog, cfg: RouterConfig,
           waits: dict[str, float] | None = None,
           projection: ProjectionModel | None = None,
           now: float = 0.0) -> RoutingDecision:
    """Route a query to the highest-scoring active candidate."""
    return _argmax_decision(score_candidates(q, catalog, cfg, waits, projection), now)


def select_online(q: Query, catalog: Catalog, cfg: RouterConfig,
                  waits: dict[str, float] | None = None,
                  net: FeedbackNet | None = None,
                  projection: ProjectionModel | None = None,
                  now: float = 0.0) -> RoutingDecision:
    """Route with the confidence-weighted feedback correction added in.

    Scores are appended to the net's variance buffers as part of scoring, and
    the confidence for this decision already reflects the appended value.
    """
    scores = score_candidates(q, catalog, cfg, waits, projection)
    if net is None:
        return _argmax_decision(scores, now)
    active_ids = [s.llm_id for s in scores]
    if net.arm_ids != active_ids:
        raise WidthMismatch(
            f"net rows {net.arm_ids} do not match active candidates {active_ids}; "
            "resize the feedback net after add/remove"
        )
    e = routing_embedding(q, projection)
    raw_df = df_scores(net, e, active_count=len(scores))
    for s, df in zip(scores, raw_df):
        kappa = net.kappa(s.llm_id, cfg.epsilon)
        s.s_df = float(df)
        s.kappa = kappa
        correction = kappa * float(df)
        if abs(correction) > 10.0 * abs(s.s_final):
            logger.warning(
                "feedback correction %.3g dwarfs base score %.3g for %s",
                correction, s.s_final, s.llm_id,
            )
        s.s_final = s.s_final + correction
    return _argmax_decision(scores, now)
