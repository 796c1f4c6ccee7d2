"""Dataset ingestion, validation and splitting.

Datasets are JSONL, one query per line:

    {"id": str, "base_embedding": [floats], "prompt_tokens": int,
     "domain_label": int|null,
     "truth": {"<llm_id>": {"quality": float, "response_tokens": int,
                            "cost_usd": float|null}}}

All rows must carry ground truth for the same candidate id set (the
rectangular property counterfactual simulation relies on); violations fail
with row-numbered errors. Splits are deterministic given their seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, GroundTruth, Query
from .errors import InsufficientDomains, ParseError, RangeError, SchemaError
from .predictors import estimate_cost

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    queries: list[Query]
    domains: int
    metadata: str = ""

    def __len__(self) -> int:
        return len(self.queries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.domains == other.domains and self.queries == other.queries


@dataclass
class SplitSpec:
    kind: str = "random"           # "random" or "ood-domain"
    train_fraction: float = 0.8
    offline_online_ratio: tuple[float, float] | None = None
    seed: int = 42

    def __post_init__(self):
        if self.kind not in ("random", "ood-domain"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.offline_online_ratio is not None:
            a, b = self.offline_online_ratio
            if a <= 0 or b <= 0:
                raise ValueError("offline/online ratio parts must be positive")


def _parse_row(raw: str, lineno: int) -> dict:
    try:
        row = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"row {lineno}: invalid JSON ({exc})") from exc
    if not isinstance(row, dict):
        raise SchemaError(f"row {lineno}: expected an object")
    return row


def _row_query(row: dict, lineno: int, require_truth: bool) -> Query:
    for key in ("id", "base_embedding", "prompt_tokens"):
        if key not in row:
            raise SchemaError(f"row {lineno}: missing key {key!r}")
    if row["prompt_tokens"] < 0:
        raise RangeError(f"row {lineno}: prompt_tokens < 0")
    truth_raw = row.get("truth")
    if truth_raw is None:
        if require_truth:
            raise SchemaError(f"row {lineno}: missing ground truth")
        truth = None
    else:
        truth = {}
        for llm_id, t in truth_raw.items():
            if "quality" not in t or "response_tokens" not in t:
                raise SchemaError(
                    f"row {lineno}: truth for {llm_id!r} missing quality/response_tokens")
            if not 0.0 <= t["quality"] <= 1.0:
                raise RangeError(
                    f"row {lineno}: quality {t['quality']} for {llm_id!r} outside [0, 1]")
            if t["response_tokens"] < 0:
                raise RangeError(f"row {lineno}: response_tokens < 0 for {llm_id!r}")
            cost = t.get("cost_usd")
            if cost is not None and cost < 0:
                raise RangeError(f"row {lineno}: cost_usd < 0 for {llm_id!r}")
            truth[llm_id] = GroundTruth(
                quality=float(t["quality"]),
                response_tokens=int(t["response_tokens"]),
                cost_usd=None if cost is None else float(cost),
            )
    domain = row.get("domain_label")
    return Query(
        id=str(row["id"]),
        base_embedding=np.asarray(row["base_embedding"], dtype=float),
        prompt_tokens=int(row["prompt_tokens"]),
        domain_label=None if domain is None else int(domain),
        ground_truth=truth,
    )


def load_dataset(path, catalog: Catalog | None = None,
                 require_truth: bool = True) -> Dataset:
    """Load and validate a JSONL dataset.

    With a catalog, missing per-candidate costs are filled from its pricing,
    and supplied costs that disagree with the pricing by more than 1% are
    logged. require_truth=False accepts rows without ground truth (e.g.
    freshly embedded queries).
    """
    queries: list[Query] = []
    id_set: frozenset | None = None
    dim: int | None = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            q = _row_query(_parse_row(raw, lineno), lineno, require_truth)
            if dim is None:
                dim = q.base_embedding.shape[0]
            elif q.base_embedding.shape[0] != dim:
                raise SchemaError(
                    f"row {lineno}: embedding dim {q.base_embedding.shape[0]} != {dim}")
            if q.ground_truth is not None:
                ids = frozenset(q.ground_truth)
                if id_set is None:
                    id_set = ids
                elif ids != id_set:
                    raise SchemaError(
                        f"row {lineno}: ground-truth candidates {sorted(ids)} "
                        f"differ from {sorted(id_set)} (dataset must be rectangular)")
            queries.append(q)
    if catalog is not None:
        _fill_costs(queries, catalog)
    labels = [q.domain_label for q in queries if q.domain_label is not None]
    domains = (max(labels) + 1) if labels else 0
    return Dataset(queries=queries, domains=domains, metadata=str(path))


def _fill_costs(queries: list[Query], catalog: Catalog) -> None:
    for q in queries:
        if not q.ground_truth:
            continue
        filled = {}
        for llm_id, t in q.ground_truth.items():
            cand = catalog.candidate(llm_id)
            computed = estimate_cost(cand, q.prompt_tokens, t.response_tokens).total
            if t.cost_usd is None:
                t = GroundTruth(t.quality, t.response_tokens, computed)
            elif computed > 0 and abs(t.cost_usd - computed) / computed > 0.01:
                logger.warning(
                    "query %s / %s: supplied cost %.6g differs from pricing %.6g "
                    "by more than 1%%", q.id, llm_id, t.cost_usd, computed)
            filled[llm_id] = t
        q.ground_truth = filled


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        for q in ds.queries:
            row = {
                "id": q.id,
                "base_embedding": q.base_embedding.tolist(),
                "prompt_tokens": q.prompt_tokens,
                "domain_label": q.domain_label,
            }
            if q.ground_truth is not None:
                row["truth"] = {
                    llm_id: {
                        "quality": t.quality,
                        "response_tokens": t.response_tokens,
                        "cost_usd": t.cost_usd,
                    }
                    for llm_id, t in q.ground_truth.items()
                }
            fh.write(json.dumps(row) + "\n")


def _subset(ds: Dataset, indices) -> Dataset:
    return Dataset(queries=[ds.queries[i] for i in indices], domains=ds.domains,
                   metadata=ds.metadata)


def _offline_online(train: Dataset, ratio):
    a, b = ratio
    n_off = int(round(len(train) * a / (a + b)))
    return _subset(train, range(n_off)), _subset(train, range(n_off, len(train)))


def split(ds: Dataset, spec: SplitSpec):
    """Deterministic train/test split; optionally offline/online/test.

    kind="random" shuffles with the seed. kind="ood-domain" assigns whole
    domains to the test side until the test fraction is met, so train and
    test domain sets never overlap; unlabeled queries stay in train.
    """
    n = len(ds.queries)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "random":
        order = rng.permutation(n)
        n_train = int(round(n * spec.train_fraction))
        train_idx, test_idx = order[:n_train], order[n_train:]
    else:
        labeled = {q.domain_label for q in ds.queries if q.domain_label is not None}
        if len(labeled) < 2:
            raise InsufficientDomains("domain-disjoint split needs >= 2 domains")
        domains = sorted(labeled)
        rng.shuffle(domains)
        target = int(round(n * (1.0 - spec.train_fraction)))
        test_domains: set[int] = set()
        test_size = 0
        for d in domains:
            if test_size >= target:
                break
            members = sum(1 for q in ds.queries if q.domain_label == d)
            test_domains.add(d)
            test_size += members
        if len(test_domains) == len(domains):
            # keep at least one domain on the train side
            test_domains.discard(domains[-1])
        train_idx = [i for i, q in enumerate(ds.queries)
                     if q.domain_label not in test_domains]
        test_idx = [i for i, q in enumerate(ds.queries)
                    if q.domain_label in test_domains]

    train, test = _subset(ds, train_idx), _subset(ds, test_idx)
    if spec.offline_online_ratio is None:
        return train, test
    offline, online = _offline_online(train, spec.offline_online_ratio)
    return offline, online, test
