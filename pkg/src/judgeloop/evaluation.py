"""EM reports, judge-impact taxonomy, and turn-budget sweeps."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .corpus import Index
from .episode import EpisodeConfig, EpisodeResult, run_batch
from .grammar import YES, ActionKind, Step
from .metrics import contains_answer, em
from .policy import Policy

ImpactCategory = Literal["positive", "negative", "normal"]
CATEGORIES: tuple[ImpactCategory, ...] = ("positive", "negative", "normal")


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    em: float
    n: int
    per_sample: tuple[tuple[str, int], ...]
    # sample ids whose episode failed and were scored 0
    flagged: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "em": self.em,
            "n": self.n,
            "per_sample": [[s, b] for s, b in self.per_sample],
            "flagged": list(self.flagged),
        }


def evaluate(results: Iterable[EpisodeResult], dataset: str = "") -> EvalReport:
    per_sample = []
    flagged = []
    for r in results:
        if r.termination == "error":
            flagged.append(r.sample_id)
            bit = 0
        else:
            bit = em(r.trajectory.final_answer, r.gold)
        per_sample.append((r.sample_id, bit))
    if not per_sample:
        raise ValueError("nothing to evaluate")
    score = sum(b for _, b in per_sample) / len(per_sample)
    return EvalReport(dataset, score, len(per_sample), tuple(per_sample), tuple(flagged))


def classify_judge_impact(step: Step, gold: Sequence[str], episode_correct: bool) -> ImpactCategory:
    """Positive if a "Yes" led to a correct answer or a "No" rejected gold-free
    evidence; negative if a "Yes" on gold-bearing evidence still ended wrong;
    normal otherwise. The positive rule is checked first."""
    if step.judgment is None or step.observation is None:
        raise ValueError("step carries no judged observation")
    yes = step.judgment == YES
    has_gold = contains_answer(step.observation.text, gold)
    if (yes and episode_correct) or (not yes and not has_gold):
        return "positive"
    if yes and has_gold and not episode_correct:
        return "negative"
    return "normal"


def judge_impact_counts(results: Iterable[EpisodeResult]) -> dict[str, int]:
    counts = Counter({c: 0 for c in CATEGORIES})
    for r in results:
        if r.termination == "error":
            continue
        correct = bool(em(r.trajectory.final_answer, r.gold))
        for s in r.trajectory.steps:
            if s.action.kind is ActionKind.SEARCH and s.judgment is not None:
                counts[classify_judge_impact(s, r.gold, correct)] += 1
    return dict(counts)


def turn_sweep(
    samples: Sequence,
    policy: Policy,
    index: Index,
    budgets: Sequence[int] = (1, 2, 3, 4),
    config: EpisodeConfig = EpisodeConfig(),
    *,
    base_seed: int = 0,
    dataset: str = "",
    workers: int = 1,
) -> list[tuple[int, EvalReport]]:
    """Evaluate the same samples (and seeds) under each turn budget."""
    if not samples:
        raise ValueError("turn sweep needs at least one sample")
    if not budgets or list(budgets) != sorted(budgets):
        raise ValueError("budgets must be a non-empty ascending list")
    out = []
    for budget in budgets:
        cfg = replace(config, max_turns=budget)
        groups = run_batch(samples, policy, index, cfg, 1, base_seed=base_seed, workers=workers)
        out.append((budget, evaluate((g[0] for g in groups), dataset)))
    return out


def write_turn_sweep_csv(path: str | Path, rows: Sequence[tuple[int, EvalReport]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "dataset", "em"])
        for budget, rep in rows:
            w.writerow([budget, rep.dataset, f"{rep.em:.6f}"])


def write_judge_impact_csv(path: str | Path, per_dataset: dict[str, dict[str, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", *CATEGORIES])
        for name in sorted(per_dataset):
            w.writerow([name, *(per_dataset[name].get(c, 0) for c in CATEGORIES)])
