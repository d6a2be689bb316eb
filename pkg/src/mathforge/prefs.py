"""Preference pairs plus reference implementations of the pairwise losses.

The ranking loss is the standard pairwise objective -log sigma(score_chosen
- score_rejected); the preference-optimization loss is -log sigma(beta *
[(policy - reference) log-ratio of chosen minus that of rejected]). Both are
pure scalar functions implemented with a numerically stable softplus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .verify import (
    FilterPolicy,
    MathItem,
    ReasoningPath,
    Verdict,
    passes_filter,
)


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: ReasoningPath
    rejected: ReasoningPath
    item_id: str
    chosen_verdict: Verdict
    rejected_verdict: Verdict
    source: str = "sft-sampled"  # sft-sampled | actor-sampled | external

    def __post_init__(self):
        if self.chosen.text == self.rejected.text:
            raise ValueError("chosen and rejected must differ")


def build_preference_pairs(item: MathItem,
                           candidates: list[tuple[ReasoningPath, Verdict]],
                           cap: int = 8,
                           policy: FilterPolicy = FilterPolicy(),
                           source: str = "sft-sampled") -> list[PreferencePair]:
    """Cross good x bad under the item's filter policy, deterministically
    ordered by (good index, bad index) and truncated to ``cap`` pairs."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    good = [(p, v) for p, v in candidates if passes_filter(item, v, policy)]
    bad = [(p, v) for p, v in candidates if not passes_filter(item, v, policy)]
    pairs: list[PreferencePair] = []
    for chosen, chosen_verdict in good:
        for rejected, rejected_verdict in bad:
            if chosen.text == rejected.text:
                continue
            pairs.append(PreferencePair(
                prompt=item.question, chosen=chosen, rejected=rejected,
                item_id=item.id, chosen_verdict=chosen_verdict,
                rejected_verdict=rejected_verdict, source=source))
            if len(pairs) >= cap:
                return pairs
    return pairs


def pair_to_json(pair: PreferencePair) -> dict:
    from .records import verdict_to_json
    return {
        "prompt": pair.prompt,
        "chosen": pair.chosen.text,
        "rejected": pair.rejected.text,
        "meta": {
            "item_id": pair.item_id,
            "source": pair.source,
            "chosen_verdict": verdict_to_json(pair.chosen_verdict),
            "rejected_verdict": verdict_to_json(pair.rejected_verdict),
        },
    }


# --------------------------------------------------------------------------
# losses

def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow for |x| up to ~1e308
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def rm_ranking_loss(score_chosen: float, score_rejected: float) -> float:
    """-log sigma(score_chosen - score_rejected); strictly decreasing in the
    margin and always positive."""
    if not (math.isfinite(score_chosen) and math.isfinite(score_rejected)):
        raise ValueError("scores must be finite")
    return _softplus(-(score_chosen - score_rejected))


def rm_accuracy(scored_pairs: list[tuple[float, float]]) -> float:
    """Fraction of pairs ranked correctly; ties earn half credit, so a
    constant scorer measures exactly 0.5."""
    if not scored_pairs:
        raise EmptyInputError("no scored pairs")
    credit = 0.0
    for chosen, rejected in scored_pairs:
        if chosen > rejected:
            credit += 1.0
        elif chosen == rejected:
            credit += 0.5
    return credit / len(scored_pairs)


@dataclass(frozen=True)
class LossInputs:
    policy_logp_w: float
    policy_logp_l: float
    ref_logp_w: float
    ref_logp_l: float
    beta: float = 0.1

    def __post_init__(self):
        values = (self.policy_logp_w, self.policy_logp_l,
                  self.ref_logp_w, self.ref_logp_l, self.beta)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("loss inputs must be finite")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


def dpo_loss(inputs: LossInputs) -> float:
    """-log sigma(beta * [(logpi_w - logref_w) - (logpi_l - logref_l)]);
    ln 2 at zero margin."""
    margin = ((inputs.policy_logp_w - inputs.ref_logp_w)
              - (inputs.policy_logp_l - inputs.ref_logp_l))
    return _softplus(-inputs.beta * margin)
