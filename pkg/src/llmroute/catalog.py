"""Domain types and the candidate catalog shared by every stage.

The catalog owns each candidate's learning state (two regressors plus the
uncertainty matrix). Candidates are soft-deleted so old decision logs stay
resolvable; equality compares the active view only. All mutation goes
through add/remove and the per-arm update paths; nothing here touches more
than one candidate's writable state at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DuplicateId, NegativeTokens, UnknownId
from .predictors import KNN, LINEAR, RegressorState
from .uncertainty import ArmUncertainty


@dataclass(frozen=True)
class GroundTruth:
    """Observed outcome of one query on one candidate (dataset-supplied)."""

    quality: float
    response_tokens: int
    cost_usd: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError(f"quality {self.quality} outside [0, 1]")
        if self.response_tokens < 0:
            raise ValueError("response_tokens must be >= 0")
        if self.cost_usd is not None and self.cost_usd < 0:
            raise ValueError("cost_usd must be >= 0")


@dataclass
class Query:
    id: str
    base_embedding: np.ndarray
    prompt_tokens: int
    domain_label: int | None = None
    ground_truth: dict[str, GroundTruth] | None = None

    def __post_init__(self):
        self.base_embedding = np.asarray(self.base_embedding, dtype=float)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Query):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.base_embedding, other.base_embedding)
            and self.prompt_tokens == other.prompt_tokens
            and self.domain_label == other.domain_label
            and self.ground_truth == other.ground_truth
        )


@dataclass
class LLMCandidate:
    """One routable model: pricing and latency profile.

    Prices are USD per 1000 tokens; tokens_per_second is the generation
    speed used by the latency simulation.
    """

    llm_id: str
    prompt_price: float
    response_price: float
    init_latency: float
    tokens_per_second: float
    active: bool = True

    def __post_init__(self):
        if self.prompt_price < 0 or self.response_price < 0:
            raise ValueError("prices must be >= 0")
        if self.tokens_per_second <= 0:
            raise ValueError("tokens_per_second must be > 0")
        if self.init_latency < 0:
            raise ValueError("init_latency must be >= 0")


@dataclass
class ArmState:
    """Per-candidate learnable state: quality/length regressors + uncertainty."""

    quality: RegressorState
    length: RegressorState
    uncertainty: ArmUncertainty


def _fresh_arm(d_route: int, regressor_kind: str = LINEAR, k: int = 5) -> ArmState:
    return ArmState(
        quality=RegressorState(regressor_kind, "quality", d_route, k=k),
        length=RegressorState(regressor_kind, "length", d_route, k=k),
        uncertainty=ArmUncertainty(d_route),
    )


@dataclass
class Catalog:
    """Ordered candidate registry with per-arm state.

    d_base is the incoming embedding dimension; d_route is the routing-space
    dimension (defaults to d_base, i.e. identity projection).
    """

    d_base: int
    d_route: int | None = None
    regressor_kind: str = LINEAR
    knn_k: int = 5
    candidates: list[LLMCandidate] = field(default_factory=list)
    arms: dict[str, ArmState] = field(default_factory=dict)

    def __post_init__(self):
        if self.d_route is None:
            self.d_route = self.d_base
        if self.regressor_kind not in (LINEAR, KNN):
            raise ValueError(f"unknown regressor kind {self.regressor_kind!r}")
        seeded = list(self.candidates)
        self.candidates = []
        for cand in seeded:
            add_candidate(self, cand)

    def active(self) -> list[LLMCandidate]:
        return [c for c in self.candidates if c.active]

    def active_ids(self) -> list[str]:
        return [c.llm_id for c in self.candidates if c.active]

    def candidate(self, llm_id: str) -> LLMCandidate:
        for c in self.candidates:
            if c.llm_id == llm_id:
                return c
        raise UnknownId(f"no candidate {llm_id!r}")

    def arm(self, llm_id: str) -> ArmState:
        if llm_id not in self.arms:
            raise UnknownId(f"no candidate {llm_id!r}")
        return self.arms[llm_id]

    def __eq__(self, other) -> bool:
        # equality is over the active view; soft-deleted entries are audit
        # records, not part of the catalog's identity
        if not isinstance(other, Catalog):
            return NotImplemented
        return (
            self.d_base == other.d_base
            and self.d_route == other.d_route
            and self.active() == other.active()
        )


def validate_query(q: Query, catalog: Catalog) -> Query:
    """Check a query against the catalog's configured dimensions."""
    if q.base_embedding.shape != (catalog.d_base,):
        raise DimensionMismatch(
            f"query {q.id}: embedding dim {q.base_embedding.shape[0]} "
            f"!= catalog d_base {catalog.d_base}"
        )
    if q.prompt_tokens < 0:
        raise NegativeTokens(f"query {q.id}: prompt_tokens {q.prompt_tokens} < 0")
    return q


def add_candidate(catalog: Catalog, c: LLMCandidate) -> Catalog:
    """Register a candidate with freshly initialized learning state.

    Never touches any other candidate's state. Re-adding a soft-deleted id
    is allowed: the tombstone entry is replaced by the new candidate (at the
    end of the insertion order) and the retained arm state is discarded in
    favor of a fresh one.
    """
    for existing in catalog.candidates:
        if existing.llm_id == c.llm_id:
            if existing.active:
                raise DuplicateId(f"candidate {c.llm_id!r} already present")
            catalog.candidates.remove(existing)
            break
    catalog.candidates.append(c)
    catalog.arms[c.llm_id] = _fresh_arm(catalog.d_route, catalog.regressor_kind,
                                        catalog.knn_k)
    return catalog


def remove_candidate(catalog: Catalog, llm_id: str) -> Catalog:
    """Soft-delete: the candidate is never selected again, state is retained."""
    for c in catalog.candidates:
        if c.llm_id == llm_id:
            if not c.active:
                raise UnknownId(f"candidate {llm_id!r} already removed")
            c.active = False
            return catalog
    raise UnknownId(f"no candidate {llm_id!r}")


def load_catalog_file(path, d_base: int | None = None,
                      d_route: int | None = None, **kwargs) -> Catalog:
    """Build a catalog from the JSON candidate file.

    Accepts either a bare JSON array of candidate objects or an object with
    a "candidates" key plus optional "d_base"/"d_route". Candidate keys:
    llm_id, prompt_price_per_1k, response_price_per_1k, init_latency_s,
    tokens_per_s.
    """
    import json

    with open(path) as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        rows = payload["candidates"]
        d_base = d_base if d_base is not None else payload.get("d_base")
        d_route = d_route if d_route is not None else payload.get("d_route")
    else:
        rows = payload
    if d_base is None:
        raise ValueError("d_base must be given in the file or as an argument")
    cands = [
        LLMCandidate(
            llm_id=row["llm_id"],
            prompt_price=float(row["prompt_price_per_1k"]),
            response_price=float(row["response_price_per_1k"]),
            init_latency=float(row["init_latency_s"]),
            tokens_per_second=float(row["tokens_per_s"]),
            active=bool(row.get("active", True)),
        )
        for row in rows
    ]
    return Catalog(d_base=int(d_base), d_route=d_route, candidates=cands, **kwargs)


def save_catalog_file(catalog: Catalog, path) -> None:
    import json

    payload = {
        "d_base": catalog.d_base,
        "d_route": catalog.d_route,
        "candidates": [
            {
                "llm_id": c.llm_id,
                "prompt_price_per_1k": c.prompt_price,
                "response_price_per_1k": c.response_price,
                "init_latency_s": c.init_latency,
                "tokens_per_s": c.tokens_per_second,
                "active": c.active,
            }
            for c in catalog.candidates
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
