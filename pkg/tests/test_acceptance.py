"""Acceptance criteria, one test per criterion, at the stated tolerances."""

import random
import re
import time

import numpy as np
import pytest

from judgeloop import grammar as g
from judgeloop import synthetic
from judgeloop.advantages import GroupRewards, gae_advantages, grpo_advantages, kl_penalty_low_var
from judgeloop.cli import main
from judgeloop.corpus import build_index
from judgeloop.episode import EpisodeConfig, run_batch
from judgeloop.evaluation import classify_judge_impact, judge_impact_counts, turn_sweep
from judgeloop.forge import audit_leakage, forge
from judgeloop.metrics import em
from judgeloop.policy import make_scripted
from judgeloop.rewards import RelevanceScorer, RewardConfig, judge_reward, score_trajectory

from conftest import answer_key
from em_cases import EM_CASES
from reward_oracle import TableScorer, brute_force_total, episode, exhaustive_cases


criterion = pytest.mark.criterion


# -- 1 --------------------------------------------------------------------------

_ALPHABET = "abcdefghij KLMNOP 0123456789 ,.?!'\"-_é\n\t"


def _rand_text(rng, lo, hi, strip):
    s = "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(lo, hi)))
    return s.strip() if strip else s


def _rand_trajectory(rng):
    actions = []
    for _ in range(rng.randint(0, 10)):
        kind = rng.choice("tsj")
        if kind == "t":
            actions.append(g.think(_rand_text(rng, 0, 40, False)))
        elif kind == "s":
            actions.append(g.search(_rand_text(rng, 1, 30, True) or "q"))
        else:
            actions.append(g.judge(rng.random() < 0.5))
    if rng.random() < 0.8:
        actions.append(g.answer(_rand_text(rng, 1, 20, True) or "a"))
    return actions


@criterion("1", "grammar round-trip on 1,000 fuzzed trajectories in < 5 s")
def test_c1_grammar_roundtrip():
    rng = random.Random(20261014)
    start = time.perf_counter()
    for _ in range(1000):
        actions = _rand_trajectory(rng)
        text = g.serialize_actions(actions)
        parsed = g.parse_response(text)
        assert parsed == actions
        assert g.serialize_actions(parsed) == text
    assert time.perf_counter() - start < 5.0


# -- 2 --------------------------------------------------------------------------

INFO = re.compile(r"<information>(.*?)</information>", re.S)


def _step_boundaries(res):
    """Number of steps that existed when each context was rendered."""
    bounds, total = [], 0
    for k, ctx in enumerate(res.contexts):
        bounds.append(min(total, len(res.trajectory.steps)))
        if k < len(res.responses):
            total += len(g.parse_response(res.responses[k]))
    return bounds


@criterion("2", "context law over 500 scripted episodes with mixed judgments")
def test_c2_context_law():
    corpus, samples = synthetic.chain_fixture(100, seed=1)
    index = build_index(corpus)
    pol = make_scripted("self_correcting", answer_key=answer_key(samples), noise=0.3)
    results = [r for grp in run_batch(samples, pol, index, EpisodeConfig(), 5, base_seed=2) for r in grp]
    assert len(results) == 500

    verdicts = {"Yes": 0, "No": 0}
    for res in results:
        steps = res.trajectory.steps
        judged_at = {s.target: i for i, s in enumerate(steps) if s.action.kind is g.ActionKind.JUDGE and s.target is not None}
        for s in steps:
            if s.judgment:
                verdicts[s.judgment] += 1
        for ctx, bound in zip(res.contexts, _step_boundaries(res)):
            included, rejected = [], []
            for i in range(bound):
                st = steps[i]
                if st.observation is None:
                    continue
                judged_now = judged_at.get(i, len(steps)) < bound
                if judged_now and st.judgment == "No":
                    rejected.append(st.observation.text)
                else:
                    included.append(st.observation.text)
            blocks = INFO.findall(ctx)
            # every retained observation is present, each exactly as often as it was retained
            assert sorted(blocks) == sorted(included)
            for text in rejected:
                if text not in included:
                    assert text not in ctx
    assert verdicts["Yes"] > 0 and verdicts["No"] > 0


# -- 3 --------------------------------------------------------------------------


@criterion("3", "judge reward branch table and exhaustive trajectory oracle")
def test_c3_reward_oracle():
    cfg = RewardConfig()
    table = {("good", "good"): cfg.r_match, ("bad", "bad"): cfg.r_match,
             ("bad", "good"): -cfg.r_mismatch, ("good", "bad"): -cfg.r_mismatch_false_positive}
    for (agent, ideal), want in table.items():
        assert judge_reward(agent, ideal, cfg) == want
    n = 0
    for combo, correct in exhaustive_cases(2, (0.0, 0.7, 1.0)):
        texts = [f"passage {i}" for i in range(len(combo))]
        scorer = RelevanceScorer("remote_reranker", remote=TableScorer(dict(zip(texts, (s for s, _ in combo)))))
        res = episode([(t, v) for t, (_, v) in zip(texts, combo)], "gold" if correct else "wrong")
        assert score_trajectory(res, ["gold"], scorer).total == brute_force_total(combo, correct)
        n += 1
    assert n == 86


# -- 4 --------------------------------------------------------------------------


@criterion("4", "GRPO invariants over 10,000 random groups")
def test_c4_grpo():
    rng = np.random.default_rng(4)
    for i in range(10_000):
        size = int(rng.integers(1, 17))
        if i % 10 == 0:
            ints = np.full(size, rng.integers(-40, 41))
        else:
            ints = rng.integers(-40, 41, size=size)
        totals = ints / 4.0
        a = np.array(grpo_advantages(GroupRewards("s", totals), 0.0).values)
        assert abs(a.sum()) < 1e-9
        if np.var(totals) > 0:
            assert abs(a.std() - 1.0) < 1e-6
        else:
            assert np.all(a == 0.0)
        shift = int(rng.integers(-40, 41)) / 4.0
        b = grpo_advantages(GroupRewards("s", totals + shift), 0.0).values
        assert tuple(a.tolist()) == b


# -- 5 --------------------------------------------------------------------------


@criterion("5", "GAE against reward-to-go and TD oracles, plus the 0.9405 fixture")
def test_c5_gae():
    rng = random.Random(5)
    for _ in range(1000):
        n = rng.randint(1, 5)
        r = [rng.uniform(-2, 2) for _ in range(n)]
        v = [rng.uniform(-2, 2) for _ in range(n + 1)]
        gamma = rng.uniform(0.5, 1.0)
        rtg = [sum(gamma ** (j - t) * r[j] for j in range(t, n)) for t in range(n)]
        for got, want in zip(gae_advantages(r, [0.0] * (n + 1), gamma, 1.0), rtg):
            assert abs(got - want) < 1e-9
        td = [r[t] + gamma * v[t + 1] - v[t] for t in range(n)]
        for got, want in zip(gae_advantages(r, v, gamma, 0.0), td):
            assert abs(got - want) < 1e-9
    a = gae_advantages([0.0, 1.0], [0.0, 0.0, 0.0])
    assert abs(a[1] - 1.0) < 1e-9 and abs(a[0] - 0.9405) < 1e-9


# -- 6 --------------------------------------------------------------------------


@criterion("6", "low-variance KL: zero on identical streams, non-negative, 0.000718 fixture")
def test_c6_kl():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        n = int(rng.integers(1, 64))
        p = rng.normal(-2, 1.5, size=n)
        q = rng.normal(-2, 1.5, size=n)
        assert kl_penalty_low_var(p, p, 0.001) == [0.0] * n
        assert min(kl_penalty_low_var(p, q, float(rng.uniform(0, 1)))) >= 0.0
    assert abs(kl_penalty_low_var([0.0], [1.0], 0.001)[0] - 0.000718) < 1e-6
    assert abs(kl_penalty_low_var([0.0], [-0.5], 1.0)[0] - 0.10653) < 1e-5


# -- 7 --------------------------------------------------------------------------


@criterion("7", "EM on the 20-case hand vector")
def test_c7_em():
    assert len(EM_CASES) == 20
    assert [em(p, gold) for p, gold, _ in EM_CASES] == [want for _, _, want in EM_CASES]
    assert em("1985", ["1987"]) == 0


# -- 8 --------------------------------------------------------------------------


@criterion("8", "turn-budget sweep trend on the 40-question fixture in < 30 s")
def test_c8_sweep():
    start = time.perf_counter()
    corpus, samples = synthetic.chain_fixture(40, seed=0)
    index = build_index(corpus)
    budgets = [1, 2, 3, 4]
    sc = [rep.em for _, rep in turn_sweep(samples, make_scripted("self_correcting", answer_key=answer_key(samples)),
                                           index, budgets)]
    ao = [rep.em for _, rep in turn_sweep(samples, make_scripted("answer_only"), index, budgets)]
    print("self_correcting EM by budget:", sc, "answer_only:", ao)
    assert all(a <= b for a, b in zip(sc, sc[1:]))
    assert sc[-1] > sc[0]
    assert len(set(ao)) == 1
    assert time.perf_counter() - start < 30.0


# -- 9 --------------------------------------------------------------------------


def _expected_category(yes, has_gold, correct):
    if (yes and correct) or (not yes and not has_gold):
        return "positive"
    if yes and has_gold and not correct:
        return "negative"
    return "normal"


@criterion("9", "judge-impact taxonomy over every case, categories partition judged steps")
def test_c9_taxonomy():
    gold = ["Lila Starling"]
    results = []
    for yes in (True, False):
        for has_gold in (True, False):
            for correct in (True, False):
                text = "(T) notes on Lila Starling" if has_gold else "(T) notes on someone else"
                step = g.Step(g.search("q"), g.Observation((), text), "Yes" if yes else "No")
                assert classify_judge_impact(step, gold, correct) == _expected_category(yes, has_gold, correct)
                res = episode([(text, yes)], "Lila Starling" if correct else "nobody")
                res.gold = gold
                results.append(res)
    counts = judge_impact_counts(results)
    assert sum(counts.values()) == 8
    assert counts == {"positive": 4, "negative": 1, "normal": 3}


# -- 10 -------------------------------------------------------------------------


@criterion("10", "closed-world forge: 7 of 70, gold in docs, clean audit, byte-identical rerun")
def test_c10_forge(tmp_path):
    base, samples = synthetic.seed_fixture(70, seed=0)
    corpus, combined, fictional, audit = forge(samples, base, 0.1, seed=0)
    assert len(fictional) == 7
    for f in fictional:
        docs = [corpus.get(i) for i in f.sample.support_doc_ids]
        assert all(d.origin == "injected" for d in docs)
        assert any(gold in d.text for gold in f.sample.gold for d in docs)
    assert audit.clean and audit_leakage(base, fictional).counts == audit.counts
    assert len(combined) == 77

    synth = tmp_path / "seeds"
    assert main(["synth", "seeds", "--n", "70", "--out", str(synth)]) == 0
    args = ["forge", "--corpus", str(synth / "corpus.jsonl"), "--dataset", str(synth / "dataset.jsonl"),
            "--fraction", "0.1", "--seed", "0"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("corpus.jsonl", "benchmark.jsonl", "fictional.jsonl", "audit.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# -- 11 -------------------------------------------------------------------------


@criterion("11", "end-to-end run on 50 questions, GRPO group 4, < 10 s, byte-identical")
def test_c11_end_to_end(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "chain", "--n", "50", "--out", str(data)]) == 0
    outputs = ("traces.jsonl", "rewards.jsonl", "advantages.jsonl")
    for run in ("a", "b"):
        start = time.perf_counter()
        code = main(["run", "--corpus", str(data / "corpus.jsonl"), "--dataset", str(data / "dataset.jsonl"),
                     "--out", str(tmp_path / run), "--policy", "self_correcting", "--noise", "0.2",
                     "--algorithm", "grpo", "--group-size", "4", "--seed", "11"])
        elapsed = time.perf_counter() - start
        assert code == 0
        assert elapsed < 10.0
    for name in outputs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len((tmp_path / "a" / "advantages.jsonl").read_text().splitlines()) == 50
