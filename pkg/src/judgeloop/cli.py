"""Command-line entry point: ``judgeloop {run,forge,eval,synth}``.

Every command writes ``config.json`` (the fully resolved configuration) next to
its outputs; rerunning with that file reproduces the outputs byte for byte
when the policy is scripted.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import advantages as adv
from .corpus import build_index, load_corpus, save_corpus
from .episode import EpisodeConfig, EpisodeResult, run_batch
from .errors import ConfigError, JudgeloopError
from .evaluation import (
    evaluate,
    judge_impact_counts,
    turn_sweep,
    write_judge_impact_csv,
    write_turn_sweep_csv,
)
from .forge import RemoteRewriter, TemplateRewriter, forge, load_samples, save_samples
from .policy import RemotePolicy, SCRIPTED_KINDS, make_scripted
from .rewards import RelevanceScorer, RemoteReranker, RewardConfig, score_trajectory, step_reward_sequence
from . import synthetic

log = logging.getLogger("judgeloop")

DEFAULT_RUN_CONFIG: dict[str, Any] = {
    "corpus": None,
    "dataset": None,
    "output": "runs/latest",
    "seed": 0,
    "workers": 1,
    "policy": {"kind": "scripted", "name": "self_correcting", "seed": 0, "noise": 0.0,
               "canned_answer": "unknown", "url": None},
    "scorer": {"kind": "lexical_regex", "threshold": 0.7, "url": None},
    "episode": {"max_turns": 4, "top_k": 3, "on_parse_error": "terminate", "obs_char_cap": 2000,
                "temperature": 1.0, "max_new_tokens": 500},
    "reward": {"r_match": 0.5, "r_mismatch": 0.5, "r_mismatch_false_positive": 1.0,
               "outcome_weight": 1.0, "step_weight": 1.0},
    "algorithm": {"name": "grpo", "group_size": 4, "epsilon": adv.EPSILON,
                  "gamma": adv.GAMMA, "lambda": adv.LAMBDA},
    "beta": adv.BETA,
}


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(records, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _set(cfg: dict, dotted: str, value) -> None:
    if value is None:
        return
    node = cfg
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def _build_policy(spec: dict, samples):
    if spec["kind"] == "remote":
        if not spec.get("url"):
            raise ConfigError("remote policy needs a url")
        return RemotePolicy(spec["url"])
    if spec.get("name") not in SCRIPTED_KINDS:
        raise ConfigError(f"unknown scripted policy {spec.get('name')!r}")
    return make_scripted(
        spec["name"], int(spec.get("seed", 0)),
        answer_key={s.question: s.gold for s in samples},
        noise=float(spec.get("noise", 0.0)),
        canned_answer=spec.get("canned_answer", "unknown"),
    )


def _build_scorer(spec: dict) -> RelevanceScorer:
    if spec["kind"] == "remote_reranker":
        if not spec.get("url"):
            raise ConfigError("remote_reranker scorer needs a url")
        return RelevanceScorer("remote_reranker", float(spec["threshold"]), RemoteReranker(spec["url"]))
    return RelevanceScorer(spec["kind"], float(spec["threshold"]))


def _inputs(cfg: dict):
    for key in ("corpus", "dataset"):
        if not cfg.get(key):
            raise ConfigError(f"missing required setting {key!r}")
        if not Path(cfg[key]).is_file():
            raise ConfigError(f"{key} file not found: {cfg[key]}")
    corpus = load_corpus(cfg["corpus"])
    samples = load_samples(cfg["dataset"])
    if not samples:
        raise ConfigError("dataset is empty")
    return corpus, samples


def _episode_config(cfg: dict) -> EpisodeConfig:
    try:
        return EpisodeConfig(**cfg["episode"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad episode settings: {exc}") from exc


# -- run --------------------------------------------------------------------------


def cmd_run(cfg: dict) -> int:
    corpus, samples = _inputs(cfg)
    ep_cfg = _episode_config(cfg)
    try:
        reward_cfg = RewardConfig(**cfg["reward"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad reward settings: {exc}") from exc
    algo = cfg["algorithm"]
    if algo["name"] not in ("grpo", "gae"):
        raise ConfigError(f"unknown algorithm {algo['name']!r}")
    group_size = int(algo.get("group_size", 1)) if algo["name"] == "grpo" else 1

    index = build_index(corpus)
    policy = _build_policy(cfg["policy"], samples)
    scorer = _build_scorer(cfg["scorer"])
    groups = run_batch(samples, policy, index, ep_cfg, group_size,
                       base_seed=int(cfg["seed"]), workers=int(cfg["workers"]))

    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg, out / "config.json")

    beta = float(cfg["beta"])
    export_cfg = adv.export_config(float(algo["gamma"]), float(algo["lambda"]), beta, float(algo["epsilon"]))
    traces, reward_lines, adv_lines = [], [], []
    for group in groups:
        breakdowns = []
        kls = []
        for res in group:
            traces.append(res.to_json())
            if res.termination == "error":
                bd = None
            else:
                bd = score_trajectory(res, res.gold, scorer, reward_cfg)
                reward_lines.append(bd.to_json())
            breakdowns.append(bd)
            kl = None
            if res.logprobs is not None and res.ref_logprobs is not None:
                kl = adv.kl_penalty_low_var(res.logprobs, res.ref_logprobs, beta)
            kls.append(kl)
        sid = group[0].sample_id
        if algo["name"] == "grpo":
            totals = [0.0 if bd is None else bd.total for bd in breakdowns]
            a = adv.grpo_advantages(adv.GroupRewards(sid, tuple(totals)), float(algo["epsilon"]))
            kl_out = kls if any(k is not None for k in kls) else None
            adv_lines.append(adv.grpo_record(a, kl_out, export_cfg))
        else:
            for res, bd, kl in zip(group, breakdowns, kls):
                if bd is None:
                    continue
                seq = step_reward_sequence(res, bd, reward_cfg)
                step_adv = adv.gae_advantages(seq, [0.0] * (len(seq) + 1), float(algo["gamma"]), float(algo["lambda"]))
                adv_lines.append(adv.gae_record(sid, res.replica, step_adv, kl, export_cfg))

    _write_jsonl(traces, out / "traces.jsonl")
    _write_jsonl(reward_lines, out / "rewards.jsonl")
    _write_jsonl(adv_lines, out / "advantages.jsonl")
    report = evaluate((g[0] for g in groups), Path(cfg["dataset"]).stem)
    _dump_json(report.to_json(), out / "eval_report.json")
    print(f"EM {report.em:.4f} over {report.n} samples; outputs in {out}")
    return 0


# -- forge ------------------------------------------------------------------------


def cmd_forge(cfg: dict) -> int:
    corpus, samples = _inputs(cfg)
    if cfg.get("rewriter_url"):
        rewriter = RemoteRewriter(cfg["rewriter_url"], seed=int(cfg["seed"]))
    else:
        rewriter = TemplateRewriter(int(cfg["seed"]), n_docs=int(cfg["n_docs"]))
    new_corpus, combined, fictional, audit = forge(samples, corpus, float(cfg["fraction"]), int(cfg["seed"]), rewriter)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg, out / "config.json")
    save_corpus(new_corpus, out / "corpus.jsonl")
    save_samples(combined, out / "benchmark.jsonl")
    save_samples([f.sample for f in fictional], out / "fictional.jsonl")
    _dump_json(audit.to_json(), out / "audit.json")
    print(f"{len(fictional)} fictional samples, {len(combined)} total; audit clean={audit.clean}")
    return 0 if audit.clean else 1


# -- eval -------------------------------------------------------------------------


def _load_traces(path: str) -> list[EpisodeResult]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"trace file not found: {path}")
    with open(p, encoding="utf-8") as fh:
        results = [EpisodeResult.from_json(json.loads(line)) for line in fh if line.strip()]
    if not results:
        raise ConfigError(f"trace file {path} is empty")
    return results


def cmd_eval(cfg: dict) -> int:
    out = Path(cfg["output"])
    wrote_anything = False
    if cfg.get("traces"):
        results = _load_traces(cfg["traces"])
        out.mkdir(parents=True, exist_ok=True)
        primary = [r for r in results if r.replica == 0]
        name = cfg.get("name") or Path(cfg["traces"]).parent.name or "traces"
        report = evaluate(primary, name)
        _dump_json(report.to_json(), out / "eval_report.json")
        by_dataset: dict[str, list[EpisodeResult]] = {name: primary}
        write_judge_impact_csv(out / "judge_impact.csv", {k: judge_impact_counts(v) for k, v in by_dataset.items()})
        print(f"EM {report.em:.4f} over {report.n} traces")
        wrote_anything = True
    if cfg.get("sweep"):
        corpus, samples = _inputs(cfg)
        budgets = [int(b) for b in str(cfg["sweep"]).split(",") if b.strip()]
        policy = _build_policy(cfg["policy"], samples)
        rows = turn_sweep(samples, policy, build_index(corpus), budgets, _episode_config(cfg),
                          base_seed=int(cfg["seed"]), dataset=Path(cfg["dataset"]).stem)
        out.mkdir(parents=True, exist_ok=True)
        write_turn_sweep_csv(out / "turn_sweep.csv", rows)
        for b, rep in rows:
            print(f"budget {b}: EM {rep.em:.4f}")
        wrote_anything = True
    if not wrote_anything:
        raise ConfigError("nothing to evaluate: give --traces and/or --sweep")
    _dump_json(cfg, out / "config.json")
    return 0


# -- synth ------------------------------------------------------------------------


def cmd_synth(cfg: dict) -> int:
    kind = cfg["kind"]
    if kind == "chain":
        corpus, samples = synthetic.chain_fixture(int(cfg["n"]), seed=int(cfg["seed"]))
    elif kind == "seeds":
        corpus, samples = synthetic.seed_fixture(int(cfg["n"]), seed=int(cfg["seed"]))
    elif kind == "bobs_burgers":
        corpus, samples = synthetic.bobs_burgers_fixture()
    else:
        raise ConfigError(f"unknown fixture kind {kind!r}")
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out / "corpus.jsonl")
    save_samples(samples, out / "dataset.jsonl")
    print(f"{len(corpus)} documents, {len(samples)} questions in {out}")
    return 0


# -- argument parsing -------------------------------------------------------------


def _add_episode_flags(p):
    p.add_argument("--max-turns", type=int, dest="episode.max_turns")
    p.add_argument("--top-k", type=int, dest="episode.top_k")
    p.add_argument("--on-parse-error", choices=["terminate", "retry_once"], dest="episode.on_parse_error")


def _add_policy_flags(p):
    p.add_argument("--policy", help="scripted kind (%s) or an http(s) URL" % ", ".join(SCRIPTED_KINDS))
    p.add_argument("--policy-seed", type=int, dest="policy.seed")
    p.add_argument("--noise", type=float, dest="policy.noise", help="judgment flip probability for scripted policies")
    p.add_argument("--canned-answer", dest="policy.canned_answer")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="judgeloop", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="roll out episodes, score them, export rewards and advantages")
    run.add_argument("--config")
    run.add_argument("--corpus")
    run.add_argument("--dataset")
    run.add_argument("--out", dest="output")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    _add_policy_flags(run)
    run.add_argument("--scorer", help="lexical_regex or a reranker URL")
    run.add_argument("--threshold", type=float, dest="scorer.threshold")
    _add_episode_flags(run)
    run.add_argument("--algorithm", choices=["grpo", "gae"], dest="algorithm.name")
    run.add_argument("--group-size", type=int, dest="algorithm.group_size")
    run.add_argument("--gamma", type=float, dest="algorithm.gamma")
    run.add_argument("--lam", type=float, dest="algorithm.lambda")
    run.add_argument("--epsilon", type=float, dest="algorithm.epsilon")
    run.add_argument("--beta", type=float)
    for name in DEFAULT_RUN_CONFIG["reward"]:
        run.add_argument("--" + name.replace("_", "-"), type=float, dest="reward." + name)

    fg = sub.add_parser("forge", help="build a closed-world benchmark with fictional samples")
    fg.add_argument("--config")
    fg.add_argument("--corpus")
    fg.add_argument("--dataset")
    fg.add_argument("--out", dest="output")
    fg.add_argument("--fraction", type=float)
    fg.add_argument("--seed", type=int)
    fg.add_argument("--n-docs", type=int, dest="n_docs")
    fg.add_argument("--rewriter-url", dest="rewriter_url")

    ev = sub.add_parser("eval", help="EM report and judge-impact counts from traces; optional turn sweep")
    ev.add_argument("--config")
    ev.add_argument("--traces")
    ev.add_argument("--name")
    ev.add_argument("--out", dest="output")
    ev.add_argument("--sweep", help="comma-separated ascending budgets, e.g. 1,2,3,4")
    ev.add_argument("--corpus")
    ev.add_argument("--dataset")
    ev.add_argument("--seed", type=int)
    _add_policy_flags(ev)
    _add_episode_flags(ev)

    sy = sub.add_parser("synth", help="write a synthetic fixture corpus and question set")
    sy.add_argument("kind", choices=["chain", "seeds", "bobs_burgers"])
    sy.add_argument("--n", type=int, default=40)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", dest="output", required=True)
    return ap


_COMMAND_DEFAULTS = {
    "forge": {"corpus": None, "dataset": None, "output": "runs/forge", "fraction": 0.1, "seed": 0,
              "n_docs": 1, "rewriter_url": None},
    "eval": {"traces": None, "name": None, "output": "runs/eval", "sweep": None, "corpus": None,
             "dataset": None, "seed": 0, "policy": DEFAULT_RUN_CONFIG["policy"],
             "episode": DEFAULT_RUN_CONFIG["episode"]},
}


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    args = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose", "config")}
    if command == "synth":
        return args
    base = DEFAULT_RUN_CONFIG if command == "run" else _COMMAND_DEFAULTS[command]
    cfg = _merge(base, _load_config_file(getattr(ns, "config", None)))
    pol = args.pop("policy", None)
    if pol is not None:
        if pol.startswith(("http://", "https://")):
            cfg["policy"].update(kind="remote", url=pol)
        else:
            cfg["policy"].update(kind="scripted", name=pol)
    scorer = args.pop("scorer", None)
    if scorer is not None:
        if scorer.startswith(("http://", "https://")):
            cfg["scorer"].update(kind="remote_reranker", url=scorer)
        else:
            cfg["scorer"].update(kind=scorer)
    for key, value in args.items():
        _set(cfg, key, value)
    return cfg


COMMANDS = {"run": cmd_run, "forge": cmd_forge, "eval": cmd_eval, "synth": cmd_synth}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except JudgeloopError as exc:
        print(f"judgeloop {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"judgeloop {ns.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
