"""Stable evaluation: solvable-task filtration, SoPR/SoWR, and the legacy
pass/win-rate state machine kept for comparison studies.

Scores are percentages in [0, 100].  Answer verdicts contribute
Solved=1, Unsure=0.5, Unsolved=0; group scores are task means, reported
as mean and standard error over evaluation repeats.  Aggregation is a
deterministic fold over the sorted task list so reports are
byte-reproducible given fixed verdicts.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .llm import BridgeUnavailable, ChatModel
from .model import (
    ApiIdentifier,
    Judgment,
    Solvability,
    SolvableVerdict,
    ToolgateError,
)
from .prompts import load_prompt


class JudgingUnavailable(ToolgateError):
    """No judge could be reached, so no verdict exists."""


TASK_GROUPS = (
    "I1-Instruction",
    "I1-Category",
    "I1-Tool",
    "I2-Instruction",
    "I2-Category",
    "I3-Instruction",
)


@dataclass(frozen=True)
class Task:
    task_id: str
    query: str
    available_tools: tuple[ApiIdentifier, ...]
    group: str

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise ValueError("query must be non-empty")
        if self.group not in TASK_GROUPS:
            raise ValueError(f"group must be one of {TASK_GROUPS}, got {self.group!r}")

    def to_prompt_payload(self) -> dict:
        return {
            "query": self.query,
            "available_tools": [
                {
                    "category": t.category,
                    "tool_name": t.tool_name,
                    "api_name": t.api_name,
                }
                for t in self.available_tools
            ],
        }


@dataclass(frozen=True)
class AnswerRecord:
    task_id: str
    method_label: str
    final_answer: str
    solution_path: str

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "method_label": self.method_label,
            "final_answer": self.final_answer,
            "solution_path": self.solution_path,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "AnswerRecord":
        return cls(
            task_id=str(payload["task_id"]),
            method_label=str(payload.get("method_label", "")),
            final_answer=str(payload.get("final_answer", "")),
            solution_path=str(payload.get("solution_path", "")),
        )


class Metric(Enum):
    SOPR = "SoPR"
    SOWR = "SoWR"
    LEGACY_PR = "LegacyPR"
    LEGACY_WR = "LegacyWR"


@dataclass(frozen=True)
class GroupScore:
    mean: float
    stderr: float


@dataclass(frozen=True)
class MetricReport:
    metric: Metric
    per_group: Mapping[str, GroupScore]
    repeats: int
    per_task_verdicts: Mapping[str, list[str]]

    def to_json(self) -> dict:
        return {
            "metric": self.metric.value,
            "repeats": self.repeats,
            "per_group": {
                group: {"mean": score.mean, "stderr": score.stderr}
                for group, score in sorted(self.per_group.items())
            },
            "per_task_verdicts": {
                task_id: list(verdicts)
                for task_id, verdicts in sorted(self.per_task_verdicts.items())
            },
        }

    def render_table(self) -> str:
        lines = [f"{self.metric.value} (repeats={self.repeats})"]
        lines.append(f"{'group':<18} {'mean':>8} {'stderr':>8}")
        for group, score in sorted(self.per_group.items()):
            lines.append(f"{group:<18} {score.mean:>8.1f} {score.stderr:>8.2f}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Judge:
    """One labelled judge: a chat model answering evaluation prompts."""

    label: str
    model: ChatModel

    def ask(self, prompt: str) -> str:
        return self.model.complete("", prompt)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _stderr(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    mu = _mean(values)
    variance = sum((v - mu) ** 2 for v in values) / (n - 1)
    return math.sqrt(variance) / math.sqrt(n)


# -- solvable-task filtration ---------------------------------------------


def _parse_solvable(reply: str) -> SolvableVerdict | None:
    low = reply.lower()
    if "unsolvable" in low:
        return SolvableVerdict.UNSOLVABLE
    if "solvable" in low:
        return SolvableVerdict.SOLVABLE
    return None


def _vote(judge: Judge, prompt: str) -> SolvableVerdict | None:
    """One judge's vote; unparseable replies get a single re-ask, then count
    as Unsolvable.  Returns None when the judge is unreachable."""
    for _ in range(2):
        try:
            reply = judge.ask(prompt)
        except BridgeUnavailable:
            return None
        verdict = _parse_solvable(reply)
        if verdict is not None:
            return verdict
    return SolvableVerdict.UNSOLVABLE


def judge_solvability(
    task: Task,
    judges: Sequence[Judge],
    *,
    threshold: str = "majority",
    prompt_dir: str | None = None,
) -> Solvability:
    """Vote the task Solvable or Unsolvable across the judge panel.

    ``threshold`` is "majority" (at least ceil(n/2) Solvable votes) or
    "unanimous".  Unreachable judges count as Unsolvable votes; if every
    judge is unreachable, JudgingUnavailable is raised instead.
    """
    if not judges:
        raise ValueError("at least one judge is required")
    if len(judges) % 2 == 0:
        raise ValueError("judge count must be odd")
    if threshold not in ("majority", "unanimous"):
        raise ValueError("threshold must be 'majority' or 'unanimous'")
    template = load_prompt("solvability", override_dir=prompt_dir)
    prompt = template.replace(
        "{task}", json.dumps(task.to_prompt_payload(), ensure_ascii=False)
    )
    per_judge: list[tuple[str, SolvableVerdict]] = []
    reachable = 0
    for judge in judges:
        verdict = _vote(judge, prompt)
        if verdict is None:
            verdict = SolvableVerdict.UNSOLVABLE
        else:
            reachable += 1
        per_judge.append((judge.label, verdict))
    if reachable == 0:
        raise JudgingUnavailable("all solvability judges are unreachable")
    solvable_votes = sum(
        1 for _, verdict in per_judge if verdict is SolvableVerdict.SOLVABLE
    )
    needed = len(judges) if threshold == "unanimous" else math.ceil(len(judges) / 2)
    verdict = (
        SolvableVerdict.SOLVABLE
        if solvable_votes >= needed
        else SolvableVerdict.UNSOLVABLE
    )
    return Solvability(verdict=verdict, per_judge=tuple(per_judge))


# -- per-answer judging -----------------------------------------------------


def _parse_judgment(reply: str) -> Judgment | None:
    low = reply.lower()
    if "unsolved" in low:
        return Judgment.UNSOLVED
    if "unsure" in low:
        return Judgment.UNSURE
    if "solved" in low:
        return Judgment.SOLVED
    return None


def judge_answer(
    task: Task,
    answer: AnswerRecord,
    judge: Judge,
    *,
    prompt_dir: str | None = None,
) -> Judgment:
    """Judge one answer Solved / Unsolved / Unsure.

    Empty final answers short-circuit to Unsolved without consulting the
    judge.  Unparseable replies get one re-ask and then count as Unsure.
    """
    if not answer.final_answer.strip():
        return Judgment.UNSOLVED
    template = load_prompt("answer_check", override_dir=prompt_dir)
    prompt = (
        template.replace("{query}", task.query)
        .replace("{answer}", answer.final_answer)
        .replace("{solution_path}", answer.solution_path)
    )
    for _ in range(2):
        try:
            reply = judge.ask(prompt)
        except BridgeUnavailable as exc:
            raise JudgingUnavailable(f"answer judge unreachable: {exc}") from exc
        verdict = _parse_judgment(reply)
        if verdict is not None:
            return verdict
    return Judgment.UNSURE


# -- SoPR --------------------------------------------------------------------

_VERDICT_SCORE = {Judgment.SOLVED: 1.0, Judgment.UNSURE: 0.5, Judgment.UNSOLVED: 0.0}


def _check_table(verdict_lists: Mapping[str, Sequence]) -> int:
    if not verdict_lists:
        raise ValueError("verdict table must be non-empty")
    lengths = {len(v) for v in verdict_lists.values()}
    if lengths == {0} or len(lengths) != 1:
        raise ValueError("every task needs the same non-zero repeat count")
    return lengths.pop()


def sopr(
    verdict_lists: Mapping[str, Sequence[Judgment]],
    *,
    groups: Mapping[str, str] | None = None,
) -> MetricReport:
    """Solvable Pass Rate over per-task verdict lists.

    ``groups`` maps task ids to group labels; without it every task is
    scored under a single "all" group.
    """
    repeats = _check_table(verdict_lists)
    by_group: dict[str, list[str]] = {}
    for task_id in sorted(verdict_lists):
        group = groups.get(task_id, "all") if groups else "all"
        by_group.setdefault(group, []).append(task_id)
    per_group = {}
    for group, ids in sorted(by_group.items()):
        repeat_scores = []
        for r in range(repeats):
            total = 0.0
            for task_id in ids:
                total += _VERDICT_SCORE[verdict_lists[task_id][r]]
            repeat_scores.append(total / len(ids) * 100.0)
        per_group[group] = GroupScore(
            mean=_mean(repeat_scores), stderr=_stderr(repeat_scores)
        )
    return MetricReport(
        metric=Metric.SOPR,
        per_group=per_group,
        repeats=repeats,
        per_task_verdicts={
            task_id: [v.value for v in verdicts]
            for task_id, verdicts in verdict_lists.items()
        },
    )


# -- SoWR --------------------------------------------------------------------


def make_comparison_judge(
    judge: Judge,
    tasks: Mapping[str, Task],
    candidate_answers: Mapping[str, AnswerRecord],
    reference_answers: Mapping[str, AnswerRecord],
    *,
    prompt_dir: str | None = None,
) -> Callable[[str, int], bool]:
    """Adapt an LLM judge into the (task_id, repeat) -> candidate-wins shape
    consumed by sowr.  Ambiguous replies get one re-ask, then the
    candidate loses."""
    template = load_prompt("comparison", override_dir=prompt_dir)

    def decide(task_id: str, repeat: int) -> bool:
        task = tasks[task_id]
        prompt = (
            template.replace(
                "{task}", json.dumps(task.to_prompt_payload(), ensure_ascii=False)
            )
            .replace("{candidate}", candidate_answers[task_id].final_answer)
            .replace("{reference}", reference_answers[task_id].final_answer)
        )
        for _ in range(2):
            try:
                reply = judge.ask(prompt)
            except BridgeUnavailable as exc:
                raise JudgingUnavailable(f"comparison judge unreachable: {exc}") from exc
            low = reply.lower()
            has_candidate = "candidate" in low
            has_reference = "reference" in low
            if has_candidate != has_reference:
                return has_candidate
        return False

    return decide


def sowr(
    candidate: Mapping[str, Sequence[Judgment]],
    reference: Mapping[str, Sequence[Judgment]],
    judge: Callable[[str, int], bool] | None = None,
    *,
    groups: Mapping[str, str] | None = None,
) -> MetricReport:
    """Solvable Win Rate of the candidate against the reference.

    Per task and repeat: Solved beats Unsolved by rule; every other pair
    is delegated to ``judge``.  The per-task outcome is the most frequent
    result across repeats (ties count as a loss) and the score is the
    fraction of won tasks.
    """
    if set(candidate) != set(reference):
        raise ValueError("candidate and reference must cover the same task set")
    repeats = _check_table(candidate)
    if _check_table(reference) != repeats:
        raise ValueError("candidate and reference must have matching repeat counts")
    outcomes: dict[str, list[str]] = {}
    for task_id in sorted(candidate):
        task_outcomes = []
        for r in range(repeats):
            ours, theirs = candidate[task_id][r], reference[task_id][r]
            if ours is Judgment.SOLVED and theirs is Judgment.UNSOLVED:
                won = True
            elif ours is Judgment.UNSOLVED and theirs is Judgment.SOLVED:
                won = False
            else:
                if judge is None:
                    raise JudgingUnavailable(
                        f"task {task_id} repeat {r} needs a comparison judge"
                    )
                won = judge(task_id, r)
            task_outcomes.append("win" if won else "loss")
        outcomes[task_id] = task_outcomes
    by_group: dict[str, list[str]] = {}
    for task_id in sorted(outcomes):
        group = groups.get(task_id, "all") if groups else "all"
        by_group.setdefault(group, []).append(task_id)
    per_group = {}
    for group, ids in sorted(by_group.items()):
        wins = 0
        for task_id in ids:
            tally = Counter(outcomes[task_id])
            if tally["win"] > tally["loss"]:
                wins += 1
        per_group[group] = GroupScore(mean=wins / len(ids) * 100.0, stderr=0.0)
    return MetricReport(
        metric=Metric.SOWR,
        per_group=per_group,
        repeats=repeats,
        per_task_verdicts=outcomes,
    )


# -- legacy pass / win rate ---------------------------------------------------


class LegacyTaskState(Enum):
    SOLVABLE = "Solvable"
    UNSOLVABLE = "Unsolvable"
    UNSURE = "Unsure"


class PassOutcome(Enum):
    PASS = "Pass"
    FAIL = "Fail"


class WinOutcome(Enum):
    WIN = "Win"
    LOSE = "Lose"


def legacy_pass(
    task_state: LegacyTaskState, answer_state: Judgment, rng: random.Random
) -> PassOutcome:
    """The original pass state machine, coin flips and all.

    Unsolvable tasks pass regardless of the answer; a coin is drawn only
    for the genuinely undecided combinations.
    """
    if task_state is LegacyTaskState.UNSOLVABLE:
        return PassOutcome.PASS
    if answer_state is Judgment.SOLVED:
        return PassOutcome.PASS
    if task_state is LegacyTaskState.SOLVABLE and answer_state is Judgment.UNSOLVED:
        return PassOutcome.FAIL
    return PassOutcome.PASS if rng.random() < 0.5 else PassOutcome.FAIL


def legacy_win(
    candidate_pass: PassOutcome,
    reference_pass: PassOutcome,
    judge: Callable[[], bool] | None = None,
) -> WinOutcome:
    """Win when the candidate passes and the reference fails; the judge
    decides every tie."""
    if candidate_pass is PassOutcome.PASS and reference_pass is PassOutcome.FAIL:
        return WinOutcome.WIN
    if candidate_pass is PassOutcome.FAIL and reference_pass is PassOutcome.PASS:
        return WinOutcome.LOSE
    if judge is None:
        raise JudgingUnavailable("tied pass outcomes need a comparison judge")
    return WinOutcome.WIN if judge() else WinOutcome.LOSE


def legacy_win_report(
    candidate: MetricReport,
    reference: MetricReport,
    judge: Callable[[], bool] | None = None,
    *,
    groups: Mapping[str, str] | None = None,
) -> MetricReport:
    """Aggregate legacy win rate from two pass reports.

    Without a judge, tied pass outcomes count as losses for the candidate
    (there is no answer content to compare at this point).
    """
    if set(candidate.per_task_verdicts) != set(reference.per_task_verdicts):
        raise ValueError("pass reports must cover the same task set")
    if candidate.repeats != reference.repeats:
        raise ValueError("pass reports must have matching repeat counts")
    tie_breaker = judge if judge is not None else (lambda: False)
    repeats = candidate.repeats
    wins: dict[str, list[str]] = {}
    for task_id in sorted(candidate.per_task_verdicts):
        outcomes = []
        for r in range(repeats):
            outcome = legacy_win(
                PassOutcome(candidate.per_task_verdicts[task_id][r]),
                PassOutcome(reference.per_task_verdicts[task_id][r]),
                judge=tie_breaker,
            )
            outcomes.append(outcome.value)
        wins[task_id] = outcomes
    by_group: dict[str, list[str]] = {}
    for task_id in sorted(wins):
        group = groups.get(task_id, "all") if groups else "all"
        by_group.setdefault(group, []).append(task_id)
    per_group = {}
    for group, ids in sorted(by_group.items()):
        repeat_scores = []
        for r in range(repeats):
            tally = sum(1 for tid in ids if wins[tid][r] == WinOutcome.WIN.value)
            repeat_scores.append(tally / len(ids) * 100.0)
        per_group[group] = GroupScore(
            mean=_mean(repeat_scores), stderr=_stderr(repeat_scores)
        )
    return MetricReport(
        metric=Metric.LEGACY_WR,
        per_group=per_group,
        repeats=repeats,
        per_task_verdicts=wins,
    )


def legacy_pass_report(
    states: Mapping[str, tuple[LegacyTaskState, Judgment]],
    seed: int,
    *,
    repeats: int = 1,
    groups: Mapping[str, str] | None = None,
) -> MetricReport:
    """Aggregate legacy pass rate over a table of (task state, answer state).

    Coins are drawn from one seeded stream in sorted task order, so the
    report is byte-identical across reruns with the same seed.
    """
    if not states:
        raise ValueError("state table must be non-empty")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = random.Random(seed)
    outcomes: dict[str, list[str]] = {task_id: [] for task_id in states}
    for _ in range(repeats):
        for task_id in sorted(states):
            task_state, answer_state = states[task_id]
            outcomes[task_id].append(legacy_pass(task_state, answer_state, rng).value)
    by_group: dict[str, list[str]] = {}
    for task_id in sorted(states):
        group = groups.get(task_id, "all") if groups else "all"
        by_group.setdefault(group, []).append(task_id)
    per_group = {}
    for group, ids in sorted(by_group.items()):
        repeat_scores = []
        for r in range(repeats):
            passes = sum(
                1 for task_id in ids if outcomes[task_id][r] == PassOutcome.PASS.value
            )
            repeat_scores.append(passes / len(ids) * 100.0)
        per_group[group] = GroupScore(
            mean=_mean(repeat_scores), stderr=_stderr(repeat_scores)
        )
    return MetricReport(
        metric=Metric.LEGACY_PR,
        per_group=per_group,
        repeats=repeats,
        per_task_verdicts=outcomes,
    )


# -- task and answer file layouts ---------------------------------------------


def load_tasks(path: str | Path) -> dict[str, Task]:
    """Read a task file: a JSON list of
    {task_id, query, group, available_tools: [{category, tool_name, api_name}]}."""
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ToolgateError(f"{path}: task file must be a JSON list")
    tasks: dict[str, Task] = {}
    for entry in payload:
        task = Task(
            task_id=str(entry["task_id"]),
            query=str(entry["query"]),
            available_tools=tuple(
                ApiIdentifier(t["category"], t["tool_name"], t["api_name"])
                for t in entry.get("available_tools", [])
            ),
            group=str(entry.get("group", "I1-Instruction")),
        )
        tasks[task.task_id] = task
    return tasks


def load_answers(path: str | Path) -> dict[str, AnswerRecord]:
    """Read every ``*.json`` answer record under a directory."""
    path = Path(path)
    answers: dict[str, AnswerRecord] = {}
    for answer_file in sorted(path.glob("*.json")):
        record = AnswerRecord.from_json(
            json.loads(answer_file.read_text(encoding="utf-8"))
        )
        answers[record.task_id] = record
    return answers
