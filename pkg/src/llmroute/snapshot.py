"""Canonical serialization of catalog + learning state.

Arm states serialize to canonical JSON (sorted keys, fixed separators), so
two equal states are byte-identical — the add/remove isolation checks rely
on that. The uncertainty inverse is recomputed on load rather than stored.
"""

from __future__ import annotations

import json

from .catalog import ArmState, Catalog, LLMCandidate
from .feedback import FeedbackNet
from .predictors import RegressorState
from .uncertainty import ArmUncertainty


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def arm_state_dict(arm: ArmState) -> dict:
    return {
        "quality": arm.quality.to_dict(),
        "length": arm.length.to_dict(),
        "uncertainty": arm.uncertainty.to_dict(),
    }


def arm_state_bytes(catalog: Catalog, llm_id: str) -> bytes:
    """Canonical bytes of one candidate's full learning state."""
    return _canon(arm_state_dict(catalog.arm(llm_id))).encode()


def save_snapshot(catalog: Catalog, path, *, net: FeedbackNet | None = None,
                  extra: dict | None = None) -> None:
    payload = {
        "d_base": catalog.d_base,
        "d_route": catalog.d_route,
        "regressor_kind": catalog.regressor_kind,
        "knn_k": catalog.knn_k,
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
        "arms": {aid: arm_state_dict(arm) for aid, arm in catalog.arms.items()},
    }
    if net is not None:
        payload["feedback_net"] = net.to_dict()
    if extra:
        payload["extra"] = extra
    with open(path, "w") as fh:
        fh.write(_canon(payload))


def load_snapshot(path) -> tuple[Catalog, FeedbackNet | None, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    catalog = Catalog(
        d_base=int(payload["d_base"]),
        d_route=int(payload["d_route"]),
        regressor_kind=payload.get("regressor_kind", "linear-ridge"),
        knn_k=int(payload.get("knn_k", 5)),
    )
    for row in payload["candidates"]:
        cand = LLMCandidate(
            llm_id=row["llm_id"],
            prompt_price=float(row["prompt_price_per_1k"]),
            response_price=float(row["response_price_per_1k"]),
            init_latency=float(row["init_latency_s"]),
            tokens_per_second=float(row["tokens_per_s"]),
            active=bool(row["active"]),
        )
        catalog.candidates.append(cand)
    for aid, d in payload["arms"].items():
        catalog.arms[aid] = ArmState(
            quality=RegressorState.from_dict(d["quality"]),
            length=RegressorState.from_dict(d["length"]),
            uncertainty=ArmUncertainty.from_dict(d["uncertainty"]),
        )
    net = None
    if "feedback_net" in payload:
        net = FeedbackNet.from_dict(payload["feedback_net"])
    return catalog, net, payload.get("extra", {})
