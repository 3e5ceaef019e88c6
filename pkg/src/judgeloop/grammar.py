"""Tag grammar for agent responses, rule checks, and prompt rendering.

A policy response is a sequence of ``<think>``, ``<search>``, ``<judge>`` and
``<answer>`` elements separated by optional whitespace. Observations are never
produced by the policy; the engine renders them into the context inside
``<information>`` elements.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import JudgeloopError


class ActionKind(str, enum.Enum):
    THINK = "think"
    SEARCH = "search"
    JUDGE = "judge"
    ANSWER = "answer"


TAGS = tuple(k.value for k in ActionKind)
YES, NO = "Yes", "No"


class ViolationKind(str, enum.Enum):
    UNCLOSED_TAG = "UnclosedTag"
    UNKNOWN_TAG = "UnknownTag"
    BAD_JUDGMENT = "BadJudgment"
    EMPTY_PAYLOAD = "EmptyPayload"
    STRAY_TEXT = "StrayText"
    TEXT_AFTER_ANSWER = "TextAfterAnswer"


class ParseError(JudgeloopError):
    def __init__(self, kind: ViolationKind, offset: int, detail: str = ""):
        msg = f"{kind.value} at byte {offset}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.kind = kind
        self.offset = offset


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    payload: str

    def __post_init__(self):
        object.__setattr__(self, "kind", ActionKind(self.kind))
        if self.kind is ActionKind.JUDGE and self.payload not in (YES, NO):
            raise ValueError(f"judge payload must be 'Yes' or 'No', got {self.payload!r}")
        if self.kind in (ActionKind.SEARCH, ActionKind.ANSWER) and not self.payload.strip():
            raise ValueError(f"{self.kind.value} payload must be non-empty")

    def render(self) -> str:
        return f"<{self.kind.value}>{self.payload}</{self.kind.value}>"


def think(text: str) -> Action:
    return Action(ActionKind.THINK, text)


def search(query: str) -> Action:
    return Action(ActionKind.SEARCH, query)


def judge(useful: bool) -> Action:
    return Action(ActionKind.JUDGE, YES if useful else NO)


def answer(text: str) -> Action:
    return Action(ActionKind.ANSWER, text)


def canonical_judgment(raw: str) -> Optional[str]:
    """Map a raw judge payload to "Yes"/"No", or None if it is neither."""
    s = raw.strip().lower()
    if s == "yes":
        return YES
    if s == "no":
        return NO
    return None


_TAG_OPEN = re.compile(r"<([A-Za-z_][\w-]*)>")


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


def parse_response(text: str) -> list[Action]:
    """Parse a policy response into actions, in textual order.

    Raises ParseError with the byte offset and violation kind on the first
    problem found.
    """
    actions: list[Action] = []
    pos = 0
    n = len(text)
    answered = False
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        if answered:
            raise ParseError(ViolationKind.TEXT_AFTER_ANSWER, _byte_offset(text, pos))
        m = _TAG_OPEN.match(text, pos)
        if m is None:
            if text.startswith("</", pos):
                raise ParseError(ViolationKind.STRAY_TEXT, _byte_offset(text, pos), "closing tag without opener")
            raise ParseError(ViolationKind.STRAY_TEXT, _byte_offset(text, pos), "text outside of tags")
        name = m.group(1)
        if name not in TAGS:
            raise ParseError(ViolationKind.UNKNOWN_TAG, _byte_offset(text, pos), f"<{name}>")
        close = f"</{name}>"
        end = text.find(close, m.end())
        if end < 0:
            raise ParseError(ViolationKind.UNCLOSED_TAG, _byte_offset(text, pos), f"<{name}>")
        raw = text[m.end():end]
        kind = ActionKind(name)
        if kind is ActionKind.THINK:
            payload = raw
        elif kind is ActionKind.JUDGE:
            payload = canonical_judgment(raw)
            if payload is None:
                raise ParseError(ViolationKind.BAD_JUDGMENT, _byte_offset(text, m.end()), repr(raw))
        else:
            payload = raw.strip()
            if not payload:
                raise ParseError(ViolationKind.EMPTY_PAYLOAD, _byte_offset(text, m.end()), f"<{name}>")
        actions.append(Action(kind, payload))
        if kind is ActionKind.ANSWER:
            answered = True
        pos = end + len(close)
    return actions


def serialize_actions(actions: Sequence[Action]) -> str:
    return "\n".join(a.render() for a in actions)


@dataclass(frozen=True)
class ObservedDoc:
    doc_id: str
    title: str
    text: str
    score: float


@dataclass(frozen=True)
class Observation:
    """What the environment returned for one search: the hits and their rendered text."""

    docs: tuple[ObservedDoc, ...]
    text: str

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.docs]


NO_RESULTS = "No results found."


def render_observation(docs: Sequence[ObservedDoc], char_cap: int = 2000) -> Observation:
    if docs:
        text = "\n".join(f"({d.title}) {d.text}" for d in docs)
    else:
        text = NO_RESULTS
    if len(text) > char_cap:
        text = text[:char_cap]
    return Observation(tuple(docs), text)


@dataclass(frozen=True)
class Step:
    """One action plus, for searches, the observation and its bound verdict.

    Judge steps record in ``target`` the index of the observation step they
    judged (None when the judge bound to nothing).
    """

    action: Action
    observation: Optional[Observation] = None
    judgment: Optional[str] = None
    target: Optional[int] = None

    def __post_init__(self):
        is_search = self.action.kind is ActionKind.SEARCH
        if is_search != (self.observation is not None):
            raise ValueError("a step carries an observation iff its action is a search")
        if self.judgment is not None:
            if self.observation is None:
                raise ValueError("only a step with an observation can be judged")
            if self.judgment not in (YES, NO):
                raise ValueError(f"bad judgment {self.judgment!r}")
        if self.target is not None and self.action.kind is not ActionKind.JUDGE:
            raise ValueError("only judge steps have a target")


@dataclass(frozen=True)
class Trajectory:
    question: str
    steps: tuple[Step, ...] = ()
    final_answer: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        answers = [i for i, s in enumerate(self.steps) if s.action.kind is ActionKind.ANSWER]
        if len(answers) > 1:
            raise ValueError("a trajectory holds at most one answer")
        if answers and answers[0] != len(self.steps) - 1:
            raise ValueError("the answer must be the last step")
        if answers and self.final_answer != self.steps[-1].action.payload:
            raise ValueError("final_answer must equal the answer step's payload")
        if not answers and self.final_answer is not None:
            raise ValueError("final_answer given without an answer step")

    def observation_steps(self) -> list[int]:
        return [i for i, s in enumerate(self.steps) if s.observation is not None]


# -- rules ---------------------------------------------------------------------


class RuleKind(str, enum.Enum):
    ANSWER_AFTER_NO_JUDGE = "AnswerAfterNoJudge"
    SEARCH_WITHOUT_JUDGE = "SearchWithoutJudge"
    MISSING_ANSWER = "MissingAnswer"
    UNBOUND_JUDGE = "UnboundJudge"


@dataclass(frozen=True)
class RuleViolation:
    kind: RuleKind
    step_index: Optional[int] = None

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "step": self.step_index}


def link_judgments(steps: Sequence[Step]) -> tuple[Step, ...]:
    """Bind every judge to the most recent not-yet-judged observation.

    Convenience for hand-assembled step lists; the episode engine does its own
    binding as it runs.
    """
    out = list(steps)
    pending: list[int] = []
    for i, step in enumerate(out):
        if step.observation is not None:
            pending.append(i)
        elif step.action.kind is ActionKind.JUDGE and pending:
            j = pending.pop()
            out[j] = replace(out[j], judgment=step.action.payload)
            out[i] = replace(step, target=j)
    return tuple(out)


def validate_rules(trajectory: Trajectory) -> list[RuleViolation]:
    """Check the conditional prompt rules. An empty list means compliant."""
    out: list[RuleViolation] = []
    last_judgment = None
    for i, step in enumerate(trajectory.steps):
        kind = step.action.kind
        if kind is ActionKind.JUDGE:
            # an unbound judge decides nothing, so it cannot mask a preceding "No"
            if step.target is None:
                out.append(RuleViolation(RuleKind.UNBOUND_JUDGE, i))
            else:
                last_judgment = step.action.payload
        elif kind is ActionKind.SEARCH:
            last_judgment = None
            if step.judgment is None:
                out.append(RuleViolation(RuleKind.SEARCH_WITHOUT_JUDGE, i))
        elif kind is ActionKind.ANSWER and last_judgment == NO:
            out.append(RuleViolation(RuleKind.ANSWER_AFTER_NO_JUDGE, i))
    if trajectory.final_answer is None:
        out.append(RuleViolation(RuleKind.MISSING_ANSWER, None))
    out.sort(key=lambda v: (-1 if v.step_index is None else v.step_index, v.kind.value))
    return out


# -- context rendering ---------------------------------------------------------

INSTRUCTIONS = (
    "Answer the given question step by step. Instructions:\n"
    "1. First, conduct reasoning inside <think> and </think> tags whenever you receive new information.\n"
    "2. If you need external knowledge, you can search using <search> query </search>.\n"
    "3. When you receive search results, evaluate their usefulness and put your judgment inside "
    "<judge> Yes </judge> or <judge> No </judge> tags.\n"
    "4. Based on your judgment, follow these strict rules:\n"
    "   a. If the information is useful AND you now have sufficient information to provide a "
    "complete final answer, proceed directly to step 5.\n"
    "   b. If the information is useful BUT you still need more details, you MUST search again "
    "with <search> ... </search>.\n"
    "   c. If the information is not useful, you MUST search again with <search> ... </search>. "
    "You MUST NOT provide an answer in this case.\n"
    "5. Provide your final answer in <answer> ... </answer> tags. The <answer> tag marks the end "
    "of the task. After providing the <answer>, you MUST stop and generate no further text.\n"
    "Question: {question}\n"
)


def render_information(observation: Observation) -> str:
    return f"<information>{observation.text}</information>"


def render_context(question: str, steps: Sequence[Step], mask: Sequence[bool]) -> str:
    """Serialize the prompt for the next policy call.

    ``mask`` has one entry per observation-bearing step; a false entry drops
    that observation's text while keeping its search tag.
    """
    n_obs = sum(1 for s in steps if s.observation is not None)
    if len(mask) != n_obs:
        raise ValueError(f"mask has {len(mask)} entries for {n_obs} observations")
    parts = [INSTRUCTIONS.format(question=question)]
    m = iter(mask)
    for step in steps:
        parts.append(step.action.render() + "\n")
        if step.observation is not None and next(m):
            parts.append(render_information(step.observation) + "\n")
    return "".join(parts)


def context_mask(steps: Sequence[Step]) -> list[bool]:
    """Observation inclusion: kept unless its bound judgment is "No"."""
    return [s.judgment != NO for s in steps if s.observation is not None]


# -- trace (de)serialization ---------------------------------------------------


def step_to_json(step: Step) -> dict:
    obs = None
    if step.observation is not None:
        obs = {
            "doc_ids": step.observation.doc_ids,
            "titles": [d.title for d in step.observation.docs],
            "texts": [d.text for d in step.observation.docs],
            "scores": [d.score for d in step.observation.docs],
            "text": step.observation.text,
        }
    return {
        "kind": step.action.kind.value,
        "payload": step.action.payload,
        "observation": obs,
        "judgment": step.judgment,
        "target": step.target,
    }


def step_from_json(obj: dict) -> Step:
    obs = None
    if obj.get("observation") is not None:
        o = obj["observation"]
        docs = tuple(
            ObservedDoc(i, t, x, float(s))
            for i, t, x, s in zip(o["doc_ids"], o["titles"], o["texts"], o["scores"])
        )
        obs = Observation(docs, o["text"])
    return Step(Action(obj["kind"], obj["payload"]), obs, obj.get("judgment"), obj.get("target"))


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "question": traj.question,
        "steps": [step_to_json(s) for s in traj.steps],
        "final_answer": traj.final_answer,
        "violations": [v.to_json() for v in validate_rules(traj)],
    }


def trajectory_from_json(obj: dict) -> Trajectory:
    return Trajectory(
        obj["question"],
        tuple(step_from_json(s) for s in obj["steps"]),
        obj.get("final_answer"),
    )
