"""Synthetic regression tasks, column partitions, schedules, and generators.

Reproducibility contract: feature matrices are drawn from PCG64 streams
seeded with ``SeedSequence((master_seed, task_id))`` and filled row by row
(C order) via ``Generator.standard_normal``. A task is therefore a pure
function of (master_seed, id, n, p, generator) and does not change when
sibling tasks are added or removed. Streams are stable within this repo,
not across RNG implementations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, as_vector

__all__ = [
    "Task",
    "Partitioning",
    "TaskSchedule",
    "GeneratorSpec",
    "gen_gaussian_task",
    "make_partition",
    "column_block",
    "build_sequence",
    "stack_offline",
    "shared_generator",
    "alternating_generator",
    "dump_task_csv",
    "load_task_csv",
]


@dataclass(frozen=True)
class Task:
    """One regression problem: fit ``features @ w ~= targets``."""

    id: int
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", as_matrix(self.features))
        object.__setattr__(self, "targets", as_vector(self.targets))
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"features have {self.features.shape[0]} rows but targets "
                f"have length {self.targets.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Partitioning:
    """Contiguous column blocks, one per node, in ascending node order."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ValueError("a partitioning needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError("every block size must be >= 1")
        object.__setattr__(self, "sizes", sizes)

    @property
    def num_nodes(self) -> int:
        return len(self.sizes)

    @property
    def p(self) -> int:
        return sum(self.sizes)

    def block_range(self, k: int) -> tuple[int, int]:
        """Column range [start, stop) owned by node ``k`` (1-based)."""
        if not 1 <= k <= self.num_nodes:
            raise ValueError(f"node index {k} out of range 1..{self.num_nodes}")
        start = sum(self.sizes[: k - 1])
        return start, start + self.sizes[k - 1]

    def block_slice(self, k: int) -> slice:
        start, stop = self.block_range(k)
        return slice(start, stop)


@dataclass(frozen=True)
class TaskSchedule:
    """Presentation order over ``num_tasks`` unique tasks.

    ``one_shot`` presents each task exactly once; ``cyclic`` loops through
    1..M in order, ``repeats`` times.
    """

    mode: str
    num_tasks: int
    repeats: int = 1

    def __post_init__(self):
        if self.mode not in ("one_shot", "cyclic"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.num_tasks < 1:
            raise ValueError("num_tasks must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.mode == "one_shot" and self.repeats != 1:
            raise ValueError("one_shot schedules have repeats == 1")

    @property
    def length(self) -> int:
        return self.num_tasks * self.repeats

    def sequence(self) -> list[int]:
        """The 1-based task index presented at each outer step."""
        return [(t - 1) % self.num_tasks + 1 for t in range(1, self.length + 1)]


@dataclass(frozen=True)
class GeneratorSpec:
    """Ground-truth parameter vectors used to synthesize targets.

    ``shared`` uses one vector for every task, so a common exact solution
    exists by construction. ``alternating`` uses ``w_even`` for tasks with
    even 1-based index and ``w_odd`` for odd ones, so in general no single
    vector solves all tasks.
    """

    kind: str
    w_star: np.ndarray | None = None
    w_even: np.ndarray | None = None
    w_odd: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "shared":
            if self.w_star is None:
                raise ValueError("shared generator needs w_star")
            object.__setattr__(self, "w_star", as_vector(self.w_star))
        elif self.kind == "alternating":
            if self.w_even is None or self.w_odd is None:
                raise ValueError("alternating generator needs w_even and w_odd")
            object.__setattr__(self, "w_even", as_vector(self.w_even))
            object.__setattr__(self, "w_odd", as_vector(self.w_odd))
            if self.w_even.shape != self.w_odd.shape:
                raise ValueError("w_even and w_odd must have equal length")
        else:
            raise ValueError(f"unknown generator kind {self.kind!r}")

    def generator_for(self, task_id: int) -> np.ndarray:
        if self.kind == "shared":
            return self.w_star
        return self.w_even if task_id % 2 == 0 else self.w_odd

    @property
    def reference(self) -> np.ndarray:
        """Vector that distance-to-generator metrics are measured against."""
        return self.w_star if self.kind == "shared" else self.w_even


def shared_generator(p: int) -> GeneratorSpec:
    """All-ones shared generator."""
    return GeneratorSpec(kind="shared", w_star=np.ones(p))


def alternating_generator(p: int) -> GeneratorSpec:
    """All-ones even generator; odd generator zeroes the last ``p // 10`` entries."""
    w_even = np.ones(p)
    w_odd = np.ones(p)
    zeros = p // 10
    if zeros:
        w_odd[p - zeros:] = 0.0
    return GeneratorSpec(kind="alternating", w_even=w_even, w_odd=w_odd)


def gen_gaussian_task(task_id: int, num_samples: int, p: int, generator,
                      master_seed: int) -> Task:
    """Synthesize one task with i.i.d. standard normal features.

    Targets are ``features @ generator`` exactly (no observation noise).
    """
    generator = as_vector(generator)
    if num_samples < 1 or p < 1:
        raise ValueError("num_samples and p must be >= 1")
    if generator.shape[0] != p:
        raise ValueError(f"generator has length {generator.shape[0]}, expected p={p}")
    if master_seed < 0 or task_id < 0:
        raise ValueError("master_seed and task_id must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence((master_seed, task_id)))
    features = rng.standard_normal((num_samples, p))
    return Task(id=task_id, features=features, targets=features @ generator)


def make_partition(p: int, sizes) -> Partitioning:
    part = Partitioning(tuple(sizes))
    if part.p != p:
        raise ValueError(f"partition sizes sum to {part.p}, expected p={p}")
    return part


def column_block(task: Task, partition: Partitioning, k: int) -> np.ndarray:
    """Contiguous copy of the feature columns owned by node ``k`` (1-based)."""
    if partition.p != task.p:
        raise ValueError(f"partition covers {partition.p} columns, task has {task.p}")
    start, stop = partition.block_range(k)
    return np.ascontiguousarray(task.features[:, start:stop])


def build_sequence(schedule: TaskSchedule, generator_spec: GeneratorSpec,
                   num_samples: int, p: int, master_seed: int,
                   ) -> tuple[list[Task], list[int]]:
    """Generate the unique tasks once, plus the presentation order over them.

    Cyclic schedules reuse the same task objects; nothing is regenerated.
    """
    tasks = [
        gen_gaussian_task(m, num_samples, p, generator_spec.generator_for(m), master_seed)
        for m in range(1, schedule.num_tasks + 1)
    ]
    return tasks, schedule.sequence()


def stack_offline(tasks) -> tuple[np.ndarray, np.ndarray]:
    """Row-stack all tasks into one centralized batch system."""
    tasks = list(tasks)
    if not tasks:
        raise ValueError("no tasks to stack")
    p0 = tasks[0].p
    if any(t.p != p0 for t in tasks):
        raise ValueError("tasks disagree on the parameter count p")
    features = np.concatenate([t.features for t in tasks], axis=0)
    targets = np.concatenate([t.targets for t in tasks])
    return features, targets


def dump_task_csv(task: Task, path) -> None:
    """Debug dump: first row is (n, p), then feature rows with a trailing target."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([task.n, task.p])
        for row, target in zip(task.features, task.targets):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])


def load_task_csv(path, task_id: int = 0) -> Task:
    """Inverse of :func:`dump_task_csv`; the id is not stored in the file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n, p = int(header[0]), int(header[1])
        rows = [[float(v) for v in row] for row in reader]
    if len(rows) != n or any(len(row) != p + 1 for row in rows):
        raise ValueError(f"malformed task file: expected {n} rows of {p + 1} values")
    data = np.asarray(rows)
    return Task(id=task_id, features=data[:, :p], targets=data[:, p])
