"""Token error rate, per-task evaluation, AWER and the 2:1 weighted AWER."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from aoscl.seqmodel import greedy_decode, shape_of


def edit_distance(a, b) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def token_error_rate(hyp, ref) -> float:
    ref = list(ref)
    if not ref:
        raise ValueError("reference must be non-empty")
    return edit_distance(hyp, ref) / len(ref)


@dataclass
class EvalReport:
    step: int
    per_task_error: dict  # task_id -> rate in [0, 1]
    awer: float
    forgetting_t0: float | None = None
    bwt: float | None = None
    extra: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {
            "step": self.step,
            "per_task_error": {str(k): v for k, v in sorted(self.per_task_error.items())},
            "awer": self.awer,
            "forgetting_t0": self.forgetting_t0,
            "bwt": self.bwt,
        }
        rec.update(self.extra)
        return rec


def task_error(params, utterances, eos: int | None = None) -> float:
    """Mean token error rate of greedy decodes over ``utterances``.

    References drop the trailing end-of-sequence token, which decoding never emits.
    """
    eos = shape_of(params).eos if eos is None else eos
    rates = []
    for u in utterances:
        ref = [t for t in u.targets if t != eos]
        rates.append(token_error_rate(greedy_decode(params, u.frames), ref))
    return float(np.mean(rates))


def awer(per_task_error: Mapping, seen_tasks: Iterable | None = None) -> float:
    tasks = list(per_task_error) if seen_tasks is None else list(seen_tasks)
    if not tasks:
        raise ValueError("no seen tasks")
    return float(np.mean([per_task_error[t] for t in tasks]))


def evaluate(params, eval_sets: Mapping, seen_tasks: Iterable, step: int = 0) -> EvalReport:
    """Per-task error over ``seen_tasks`` and their unweighted mean; never mutates ``params``."""
    seen = list(seen_tasks)
    missing = [t for t in seen if t not in eval_sets]
    if missing:
        raise KeyError(f"no evaluation set for tasks {missing}")
    per_task = {t: task_error(params, eval_sets[t]) for t in seen}
    return EvalReport(step=step, per_task_error=per_task, awer=awer(per_task, seen))


def weighted_awer(err_initial: float, err_new: float, w: float = 2.0) -> float:
    """``(w * err_initial + err_new) / (w + 1)``; ``w = 2`` puts extra weight on not forgetting."""
    if not w > 0:
        raise ValueError("weight must be positive")
    return (w * err_initial + err_new) / (w + 1)


def forgetting(current: Mapping, reference: Mapping, tasks: Iterable) -> dict:
    """Per-task increase in error relative to ``reference``."""
    return {t: current[t] - reference[t] for t in tasks}


def backward_transfer(current: Mapping, at_completion: Mapping, completed: Iterable) -> float | None:
    """Negative mean forgetting over completed tasks (positive = old tasks improved)."""
    completed = list(completed)
    if not completed:
        return None
    return -float(np.mean([current[t] - at_completion[t] for t in completed]))
