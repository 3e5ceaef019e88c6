"""Judgment rewards against an ideal judgment, plus the exact-match outcome reward."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import httpx

from ._http import JsonEndpoint, TOKEN_ENV
from .episode import EpisodeResult
from .errors import ProtocolError
from .grammar import NO, YES, ActionKind, RuleKind, RuleViolation
from .metrics import contains_answer, em

DEFAULT_THRESHOLD = 0.7
Label = Literal["good", "bad"]


class RemoteReranker:
    """Client for ``POST /rerank``: one request per gold string, scores clamped to [0, 1]."""

    def __init__(
        self,
        base_url: str,
        *,
        token_env: str = TOKEN_ENV,
        retries: int = 3,
        backoff: float = 0.5,
        max_concurrency: int = 8,
        timeout: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self._endpoint = JsonEndpoint(
            base_url, token_env=token_env, timeout=timeout, retries=retries,
            backoff=backoff, max_concurrency=max_concurrency, transport=transport,
        )

    def score_many(self, passages: Sequence[str], gold: Sequence[str]) -> list[float]:
        best = [0.0] * len(passages)
        if not passages:
            return best
        for g in gold:
            body = self._endpoint.post("/rerank", {"query": g, "passages": list(passages), "gold": list(gold)})
            scores = body.get("scores") if isinstance(body, dict) else None
            if not isinstance(scores, list) or len(scores) != len(passages):
                raise ProtocolError("rerank response must carry one score per passage")
            for i, s in enumerate(scores):
                try:
                    v = min(1.0, max(0.0, float(s)))
                except (TypeError, ValueError) as exc:
                    raise ProtocolError(f"non-numeric rerank score {s!r}") from exc
                best[i] = max(best[i], v)
        return best


@dataclass(frozen=True)
class RelevanceScorer:
    kind: Literal["lexical_regex", "remote_reranker"] = "lexical_regex"
    threshold: float = DEFAULT_THRESHOLD
    remote: Optional[RemoteReranker] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("lexical_regex", "remote_reranker"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.kind == "remote_reranker" and self.remote is None:
            raise ValueError("remote_reranker scorer needs a RemoteReranker client")

    def score_many(self, observations: Sequence[str], gold: Sequence[str]) -> list[float]:
        if not gold:
            raise ValueError("gold must be non-empty")
        if self.kind == "lexical_regex":
            return [1.0 if contains_answer(o, gold) else 0.0 for o in observations]
        return self.remote.score_many(observations, gold)


def utility_score(scorer: RelevanceScorer, observation: str, gold: Sequence[str]) -> float:
    if not observation:
        raise ValueError("observation must be non-empty")
    return scorer.score_many([observation], gold)[0]


def ideal_judgment(score: float, threshold: float = DEFAULT_THRESHOLD) -> Label:
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    return "good" if score >= threshold else "bad"


@dataclass(frozen=True)
class RewardConfig:
    r_match: float = 0.5
    r_mismatch: float = 0.5
    r_mismatch_false_positive: float = 1.0
    outcome_weight: float = 1.0
    step_weight: float = 1.0

    def __post_init__(self):
        for name in ("r_match", "r_mismatch", "r_mismatch_false_positive", "outcome_weight", "step_weight"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.r_mismatch_false_positive < self.r_mismatch:
            raise ValueError("r_mismatch_false_positive must be >= r_mismatch")

    @classmethod
    def symmetric(cls, r_match: float = 0.5, r_mismatch: float = 0.5, **kw) -> "RewardConfig":
        return cls(r_match=r_match, r_mismatch=r_mismatch, r_mismatch_false_positive=r_mismatch, **kw)


def verdict_label(verdict: str) -> Label:
    if verdict == YES:
        return "good"
    if verdict == NO:
        return "bad"
    raise ValueError(f"bad verdict {verdict!r}")


def judge_reward(agent: Label, ideal: Label, config: RewardConfig = RewardConfig()) -> float:
    if agent == ideal:
        return config.r_match
    if agent == "good":
        # approving useless evidence costs more than missing useful evidence
        return -config.r_mismatch_false_positive
    return -config.r_mismatch


@dataclass(frozen=True)
class RewardBreakdown:
    per_step: tuple[tuple[int, float], ...]
    outcome: float
    total: float
    violations: tuple[RuleViolation, ...] = ()
    sample_id: str = ""
    replica: int = 0

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "replica": self.replica,
            "per_step": [[i, r] for i, r in self.per_step],
            "outcome": self.outcome,
            "total": self.total,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def score_trajectory(
    result: EpisodeResult,
    gold: Sequence[str],
    scorer: RelevanceScorer = RelevanceScorer(),
    config: RewardConfig = RewardConfig(),
) -> RewardBreakdown:
    """Reward each (observation, judgment) pair, then add the outcome reward.

    Rewards are indexed by the judge step that produced them.
    """
    steps = result.trajectory.steps
    pairs = [
        (i, s.target) for i, s in enumerate(steps)
        if s.action.kind is ActionKind.JUDGE and s.target is not None
    ]
    texts = [steps[t].observation.text for _, t in pairs]
    scores = scorer.score_many(texts, gold) if pairs else []
    per_step = []
    for (ji, ti), s in zip(pairs, scores):
        agent = verdict_label(steps[ti].judgment)
        per_step.append((ji, judge_reward(agent, ideal_judgment(s, scorer.threshold), config)))
    unjudged = tuple(
        RuleViolation(RuleKind.SEARCH_WITHOUT_JUDGE, i)
        for i, s in enumerate(steps) if s.observation is not None and s.judgment is None
    )
    outcome = float(em(result.trajectory.final_answer, gold))
    total = config.step_weight * sum(r for _, r in per_step) + config.outcome_weight * outcome
    return RewardBreakdown(tuple(per_step), outcome, total, unjudged, result.sample_id, result.replica)


def step_reward_sequence(result: EpisodeResult, breakdown: RewardBreakdown, config: RewardConfig = RewardConfig()) -> list[float]:
    """Per-step rewards over the trajectory: judge rewards at judge steps, outcome on the last step."""
    n = max(1, len(result.trajectory.steps))
    seq = [0.0] * n
    for i, r in breakdown.per_step:
        seq[i] += config.step_weight * r
    seq[-1] += config.outcome_weight * breakdown.outcome
    return seq
