"""Judge-gated search agent harness.

Agents alternate search and judge actions; observations judged "No" drop out
of later contexts, judgments are rewarded against a thresholded relevance
oracle, and group-relative or GAE advantages are exported for a trainer.
"""

from .advantages import (
    AdvantageSet,
    GroupRewards,
    gae_advantages,
    grpo_advantages,
    kl_penalty_low_var,
)
from .corpus import Corpus, Document, Index, RetrievalResult, build_index, inject_documents, retrieve
from .episode import EpisodeConfig, EpisodeResult, run_batch, run_episode
from .evaluation import EvalReport, classify_judge_impact, evaluate, turn_sweep
from .forge import (
    BenchSample,
    FictionalSample,
    TemplateRewriter,
    assemble_benchmark,
    audit_leakage,
    fictionalize,
    sample_seeds,
)
from .grammar import (
    Action,
    ActionKind,
    ParseError,
    RuleViolation,
    Step,
    Trajectory,
    parse_response,
    render_context,
    serialize_actions,
    validate_rules,
)
from .metrics import em, normalize_answer
from .policy import PolicyRequest, PolicyResponse, RemotePolicy, make_scripted, next_actions
from .rewards import (
    RelevanceScorer,
    RewardBreakdown,
    RewardConfig,
    ideal_judgment,
    judge_reward,
    score_trajectory,
    utility_score,
)

__version__ = "0.1.0"

