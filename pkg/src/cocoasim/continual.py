"""Outer loop over the task sequence with warm starts.

Each outer step solves the presented task starting from the previous
solution; warm starting is the only mechanism carrying information
between tasks. The loop is inherently sequential (w_t depends on
w_{t-1}); distinct runs are independent and parallelize at the sweep
level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocoa import CocoaConfig, CocoaState, SolverCache, init_state, run_cocoa
from .metrics import (
    MetricRecord,
    distance_to_generator,
    relative_last_step,
    task_loss,
    unique_forgetting,
    weighted_forgetting,
)
from .tasks import Partitioning, Task

__all__ = ["ContinualConfig", "RunTrace", "warm_start", "run_continual"]


@dataclass(frozen=True)
class ContinualConfig:
    """Outer-loop knobs.

    Metrics are evaluated every ``eval_stride`` outer steps (and always at
    the final step). ``record_w`` keeps every iterate, for small runs and
    tests only. A run aborts, with the event recorded rather than raised,
    once ``||w_t||`` leaves ``[0, divergence_norm)`` or turns non-finite.
    """

    cocoa: CocoaConfig
    eval_stride: int = 1
    record_w: bool = False
    divergence_norm: float = 1e12

    def __post_init__(self):
        if self.eval_stride < 1:
            raise ValueError("eval_stride must be >= 1")


@dataclass
class RunTrace:
    """Evaluation records plus the final iterate of one continual run."""

    records: list[MetricRecord]
    final_w: np.ndarray
    final_t: int
    diverged: bool
    diverged_at: int | None
    eval_stride: int
    w_history: list[np.ndarray] | None = None


def warm_start(w_prev, task: Task, partition: Partitioning) -> CocoaState:
    """Solver state for resuming on a new task from the previous solution."""
    return init_state(task, partition, w_prev)


def _evaluate(tasks, counts, w, w_prev, reference, t, guard_tripped) -> MetricRecord:
    with np.errstate(over="ignore", invalid="ignore"):
        losses = [task_loss(task, w) for task in tasks]
        values = (
            weighted_forgetting(losses, counts),
            unique_forgetting(losses, counts),
            relative_last_step(w, w_prev),
            distance_to_generator(w, reference),
        )
    finite = all(np.isfinite(v) for v in values)
    return MetricRecord(
        t=t,
        forgetting=values[0],
        forgetting_unique=values[1],
        rel_step=values[2],
        dist_to_gen=values[3],
        diverged=guard_tripped or not finite,
        task_losses=tuple(losses),
    )


def run_continual(tasks: list[Task], sequence: list[int], partition: Partitioning,
                  config: ContinualConfig, reference) -> RunTrace:
    """Train over the whole sequence from w_0 = 0 and record the trajectory.

    ``reference`` is the generator vector that distance metrics are
    measured against. Returns the evaluation trace and the final iterate;
    a diverged run returns early with its last (non-finite) record kept.
    """
    if not tasks:
        raise ValueError("no tasks to train on")
    p = tasks[0].p
    reference = np.asarray(reference, dtype=np.float64)
    if reference.shape != (p,):
        raise ValueError(f"reference has shape {reference.shape}, expected ({p},)")

    cache = SolverCache()
    counts = [0] * len(tasks)
    records: list[MetricRecord] = []
    w_history: list[np.ndarray] | None = [] if config.record_w else None

    w = np.zeros(p)
    total = len(sequence)
    diverged = False
    diverged_at = None
    final_t = 0

    for t, m in enumerate(sequence, start=1):
        if not 1 <= m <= len(tasks):
            raise ValueError(f"sequence entry {m} at step {t} out of range 1..{len(tasks)}")
        w_before = w
        w = run_cocoa(tasks[m - 1], partition, w, config.cocoa, cache)
        counts[m - 1] += 1
        final_t = t
        if w_history is not None:
            w_history.append(w)

        norm = float(np.linalg.norm(w))
        guard_tripped = not (norm < config.divergence_norm)
        if guard_tripped or t % config.eval_stride == 0 or t == total:
            records.append(_evaluate(tasks, counts, w, w_before, reference, t, guard_tripped))
        if guard_tripped:
            diverged = True
            diverged_at = t
            break

    return RunTrace(
        records=records,
        final_w=w,
        final_t=final_t,
        diverged=diverged,
        diverged_at=diverged_at,
        eval_stride=config.eval_stride,
        w_history=w_history,
    )
