"""Group-relative and GAE advantages, and the low-variance KL penalty.

Nothing here updates a model; the outputs are exported for an external trainer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from . import _kernels

GAMMA = 0.99
LAMBDA = 0.95
BETA = 0.001
EPSILON = 1e-8


@dataclass(frozen=True)
class GroupRewards:
    sample_id: str
    totals: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "totals", tuple(float(t) for t in self.totals))
        if not self.totals:
            raise ValueError("a reward group needs at least one replica")

    @property
    def group_size(self) -> int:
        return len(self.totals)


@dataclass(frozen=True)
class AdvantageSet:
    algorithm: Literal["grpo", "gae"]
    values: tuple[float, ...]
    kl_penalties: Optional[tuple[tuple[float, ...], ...]] = None
    sample_id: str = ""


def grpo_advantages(group: GroupRewards, epsilon: float = EPSILON) -> AdvantageSet:
    """Z-score each replica's total against its group (population std).

    Rewards are first shifted by the first replica's value, which leaves the
    result unchanged mathematically but makes it exactly invariant to any
    translation that is itself exact in floating point.
    """
    r = np.asarray(group.totals, dtype=np.float64)
    d = r - r[0]
    centered = d - d.mean()
    std = float(np.sqrt(np.mean(centered * centered)))
    if std == 0.0:
        adv = np.zeros_like(r)
    else:
        adv = centered / (std + epsilon)
    return AdvantageSet("grpo", tuple(adv.tolist()), sample_id=group.sample_id)


def gae_advantages(
    step_rewards: Sequence[float],
    values: Sequence[float],
    gamma: float = GAMMA,
    lam: float = LAMBDA,
) -> list[float]:
    """Backward GAE recursion. ``values`` carries one bootstrap entry past the last step."""
    r = np.asarray(step_rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if v.shape[0] != r.shape[0] + 1:
        raise ValueError(f"need {r.shape[0] + 1} values for {r.shape[0]} rewards, got {v.shape[0]}")
    if r.shape[0] == 0:
        return []
    return _kernels.gae(r, v, float(gamma), float(lam)).tolist()


def kl_penalty_low_var(logp: Sequence[float], ref_logp: Sequence[float], beta: float = BETA) -> list[float]:
    """Per-token ``beta * (exp(d) - d - 1)`` with ``d = ref_logp - logp``; never negative."""
    p = np.asarray(logp, dtype=np.float64)
    q = np.asarray(ref_logp, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"logprob streams differ in length: {p.shape[0]} vs {q.shape[0]}")
    if p.shape[0] == 0:
        return []
    out = _kernels.low_var_kl(p, q, float(beta))
    # expm1(d) - d can round a hair below zero when |d| is tiny
    return np.maximum(out, 0.0).tolist()


def export_config(gamma: float = GAMMA, lam: float = LAMBDA, beta: float = BETA, epsilon: float = EPSILON) -> dict:
    return {"gamma": gamma, "lambda": lam, "beta": beta, "epsilon": epsilon}


def grpo_record(adv: AdvantageSet, kl: Optional[list], config: dict) -> dict:
    return {
        "sample_id": adv.sample_id,
        "algorithm": "grpo",
        "replica_advantages": list(adv.values),
        "kl": kl,
        "config": config,
    }


def gae_record(sample_id: str, replica: int, step_adv: list[float], kl: Optional[list], config: dict) -> dict:
    return {
        "sample_id": sample_id,
        "replica": replica,
        "algorithm": "gae",
        "step_advantages": step_adv,
        "kl": kl,
        "config": config,
    }
