"""Multi-turn episodes with judge-gated context assembly."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

from . import grammar
from .corpus import Index
from .errors import JudgeloopError
from .grammar import ActionKind, ParseError, Step, Trajectory
from .policy import DEFAULT_TEMPERATURE, RESPONSE_CAP, Policy, PolicyRequest

log = logging.getLogger(__name__)

Termination = Literal["answered", "budget_exhausted", "parse_error", "error"]


@dataclass(frozen=True)
class EpisodeConfig:
    max_turns: int = 4
    top_k: int = 3
    on_parse_error: Literal["terminate", "retry_once"] = "terminate"
    obs_char_cap: int = 2000
    temperature: float = DEFAULT_TEMPERATURE
    max_new_tokens: int = RESPONSE_CAP
    # policy calls in a row that neither search nor answer before giving up
    max_idle_responses: int = 2

    def __post_init__(self):
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.on_parse_error not in ("terminate", "retry_once"):
            raise ValueError(f"bad on_parse_error {self.on_parse_error!r}")
        if self.max_idle_responses < 1:
            raise ValueError("max_idle_responses must be >= 1")

    @classmethod
    def single_turn(cls, **overrides) -> "EpisodeConfig":
        """Preset matching a one-tool-call-per-episode training environment."""
        return cls(max_turns=1, **overrides)


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    context_masks: list[bool]
    termination: Termination
    turn_count: int
    contexts: list[str] = field(default_factory=list)
    responses: list[str] = field(default_factory=list)
    logprobs: Optional[list[float]] = None
    ref_logprobs: Optional[list[float]] = None
    sample_id: str = ""
    replica: int = 0
    seed: int = 0
    gold: list[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def answered(self) -> bool:
        return self.trajectory.final_answer is not None

    def violations(self) -> list[grammar.RuleViolation]:
        return grammar.validate_rules(self.trajectory)

    def to_json(self) -> dict:
        out = {"sample_id": self.sample_id, "replica": self.replica, "seed": self.seed, "gold": self.gold}
        out.update(grammar.trajectory_to_json(self.trajectory))
        out.update(
            termination=self.termination,
            turn_count=self.turn_count,
            context_masks=self.context_masks,
            error=self.error,
        )
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeResult":
        return cls(
            trajectory=grammar.trajectory_from_json(obj),
            context_masks=list(obj.get("context_masks", [])),
            termination=obj["termination"],
            turn_count=int(obj["turn_count"]),
            sample_id=obj.get("sample_id", ""),
            replica=int(obj.get("replica", 0)),
            seed=int(obj.get("seed", 0)),
            gold=list(obj.get("gold", [])),
            error=obj.get("error"),
        )


def derive_seed(base_seed: int, sample_id: str, replica: int) -> int:
    h = hashlib.sha256(f"{base_seed}/{sample_id}/{replica}".encode("utf-8")).digest()
    return int.from_bytes(h[:4], "big")


def _latest_unjudged(steps: Sequence[Step]) -> Optional[int]:
    for i in range(len(steps) - 1, -1, -1):
        if steps[i].observation is not None and steps[i].judgment is None:
            return i
    return None


def run_episode(
    question: str,
    gold: Sequence[str],
    policy: Policy,
    index: Index,
    config: EpisodeConfig = EpisodeConfig(),
    *,
    seed: int = 0,
    sample_id: str = "",
    replica: int = 0,
) -> EpisodeResult:
    if not question.strip():
        raise ValueError("question must be non-empty")
    steps: list[Step] = []
    contexts: list[str] = []
    responses: list[str] = []
    logprobs: Optional[list[float]] = []
    ref_logprobs: Optional[list[float]] = []
    turns = 0
    idle = 0
    termination: Optional[Termination] = None
    attempts = 2 if config.on_parse_error == "retry_once" else 1

    while termination is None:
        ctx = grammar.render_context(question, steps, grammar.context_mask(steps))
        contexts.append(ctx)
        request = PolicyRequest(ctx, config.temperature, config.max_new_tokens, seed)
        actions = None
        for _ in range(attempts):
            response = policy.next_actions(request)
            responses.append(response.text)
            try:
                actions = grammar.parse_response(response.text)
                break
            except ParseError as exc:
                log.debug("episode %s/%d: unparseable response: %s", sample_id, replica, exc)
        if actions is None:
            termination = "parse_error"
            break

        if logprobs is not None and response.token_logprobs is not None and response.ref_logprobs is not None:
            logprobs.extend(lp for _, lp in response.token_logprobs)
            ref_logprobs.extend(response.ref_logprobs)
        else:
            logprobs = ref_logprobs = None

        progressed = False
        judged_this_response = False
        for action in actions:
            kind = action.kind
            if kind is ActionKind.SEARCH:
                if turns >= config.max_turns:
                    termination = "budget_exhausted"
                    break
                hits = index.retrieve(action.payload, config.top_k)
                docs = []
                for h in hits:
                    d = index.document(h.doc_id)
                    docs.append(grammar.ObservedDoc(h.doc_id, d.title, d.text, h.score))
                steps.append(Step(action, grammar.render_observation(docs, config.obs_char_cap)))
                turns += 1
                progressed = True
            elif kind is ActionKind.JUDGE:
                target = None
                if not judged_this_response:
                    target = _latest_unjudged(steps)
                    if target is not None:
                        steps[target] = replace(steps[target], judgment=action.payload)
                        judged_this_response = True
                steps.append(Step(action, target=target))
            elif kind is ActionKind.ANSWER:
                steps.append(Step(action))
                termination = "answered"
                break
            else:
                steps.append(Step(action))
        if termination is None:
            idle = 0 if progressed else idle + 1
            if idle >= config.max_idle_responses:
                termination = "budget_exhausted"

    final = steps[-1].action.payload if termination == "answered" else None
    traj = Trajectory(question, tuple(steps), final)
    return EpisodeResult(
        trajectory=traj,
        context_masks=grammar.context_mask(steps),
        termination=termination,
        turn_count=turns,
        contexts=contexts,
        responses=responses,
        logprobs=logprobs or None,
        ref_logprobs=ref_logprobs or None,
        sample_id=sample_id,
        replica=replica,
        seed=seed,
        gold=list(gold),
    )


def _failed(sample, replica: int, seed: int, exc: Exception) -> EpisodeResult:
    return EpisodeResult(
        trajectory=Trajectory(sample.question),
        context_masks=[],
        termination="error",
        turn_count=0,
        sample_id=sample.sample_id,
        replica=replica,
        seed=seed,
        gold=list(sample.gold),
        error=f"{type(exc).__name__}: {exc}",
    )


def run_batch(
    samples: Sequence,
    policy: Policy,
    index: Index,
    config: EpisodeConfig = EpisodeConfig(),
    group_size: int = 1,
    *,
    base_seed: int = 0,
    workers: int = 1,
) -> list[list[EpisodeResult]]:
    """Run ``group_size`` episodes per sample; output order follows the input.

    Failures inside one episode become ``termination="error"`` results.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    jobs = [(s, r, derive_seed(base_seed, s.sample_id, r)) for s in samples for r in range(group_size)]

    def work(job):
        sample, replica, seed = job
        try:
            return run_episode(
                sample.question, sample.gold, policy, index, config,
                seed=seed, sample_id=sample.sample_id, replica=replica,
            )
        except (JudgeloopError, ValueError) as exc:
            log.warning("episode %s/%d failed: %s", sample.sample_id, replica, exc)
            return _failed(sample, replica, seed, exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(work, jobs))
    else:
        flat = [work(j) for j in jobs]
    return [flat[i:i + group_size] for i in range(0, len(flat), group_size)]
