"""Scalar diagnostics: data-fit loss, forgetting, step size, distances.

All functions are pure. Non-finite inputs propagate as inf/nan rather
than raising, so diverged runs can be recorded instead of crashing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import min_norm_solve
from .tasks import Task, stack_offline

__all__ = [
    "MetricRecord",
    "task_loss",
    "weighted_forgetting",
    "unique_forgetting",
    "forgetting",
    "relative_last_step",
    "distance_to_generator",
    "offline_oracle",
]


@dataclass(frozen=True)
class MetricRecord:
    """Diagnostics at one outer step. All values finite unless ``diverged``."""

    t: int
    forgetting: float
    forgetting_unique: float
    rel_step: float
    dist_to_gen: float
    diverged: bool
    task_losses: tuple[float, ...]


def task_loss(task: Task, w) -> float:
    """Mean squared residual ``||features @ w - targets||^2 / n``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (task.p,):
        raise ValueError(f"w has shape {w.shape}, expected ({task.p},)")
    residual = task.features @ w - task.targets
    return float(residual @ residual) / task.n


def weighted_forgetting(losses, counts) -> float:
    """Presentation-weighted mean of per-task losses.

    ``counts[m]`` is how many times task m has been presented so far; the
    sum runs in ascending task order so results are reproducible.
    """
    total = 0.0
    presented = 0
    for loss, count in zip(losses, counts):
        if count:
            total += count * loss
            presented += count
    if presented == 0:
        raise ValueError("no task has been presented yet")
    return total / presented


def unique_forgetting(losses, counts) -> float:
    """Unweighted mean loss over the distinct tasks presented so far."""
    seen = [loss for loss, count in zip(losses, counts) if count]
    if not seen:
        raise ValueError("no task has been presented yet")
    total = 0.0
    for loss in seen:
        total += loss
    return total / len(seen)


def forgetting(tasks, sequence, w, t: int) -> float:
    """Mean data-fit loss over the first ``t`` presentations, at the single ``w``.

    Repeat presentations of a task contribute equal terms, so the sum is
    evaluated as an occurrence-weighted mean over the unique tasks.
    """
    if not 1 <= t <= len(sequence):
        raise ValueError(f"t={t} out of range 1..{len(sequence)}")
    counts = [0] * len(tasks)
    for m in sequence[:t]:
        counts[m - 1] += 1
    losses = [task_loss(task, w) for task in tasks]
    return weighted_forgetting(losses, counts)


def relative_last_step(w_now, w_prev) -> float:
    """Squared last-step size relative to the current iterate:
    ``||w_now - w_prev||^2 / ||w_now||^2``. Returns inf when ``w_now`` is zero."""
    w_now = np.asarray(w_now, dtype=np.float64)
    w_prev = np.asarray(w_prev, dtype=np.float64)
    if w_now.shape != w_prev.shape:
        raise ValueError(f"shape mismatch: {w_now.shape} vs {w_prev.shape}")
    denom = float(w_now @ w_now)
    if denom == 0.0:
        return float("inf")
    delta = w_now - w_prev
    return float(delta @ delta) / denom


def distance_to_generator(w, w_star) -> float:
    """Euclidean distance ``||w - w_star||``."""
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    if w.shape != w_star.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {w_star.shape}")
    return float(np.linalg.norm(w - w_star))


def offline_oracle(tasks) -> np.ndarray:
    """Minimum-norm solution of the centralized batch over all unique tasks.

    When the stack has at least as many rows as columns and full rank,
    this is the unique least-squares solution; otherwise it is the
    minimum-norm interpolator.
    """
    features, targets = stack_offline(tasks)
    return min_norm_solve(features, targets)
