"""CoCoA inner solver: synchronized block-coordinate rounds for one task.

Each of the K nodes owns one contiguous column block of the unknown
vector. A round averages the nodes' prediction shares, then every node
takes a least-norm correction against that same average, scaled by 1/K.
When every local block is broad (block width >= sample count) and full
rank, a single round lands exactly on an affine map of the warm start;
that map is precomputed by :func:`build_operator` and applied by
:func:`closed_form_update`.

Shares are seeded as K times each node's local prediction so that their
average equals the full prediction ``features @ x``; the average then
tracks ``features @ x`` across rounds, which is what makes the one-round
closed form and the latest-task interpolation hold for warm starts.

Determinism: share aggregation always sums in ascending node order, so
two runs on identical inputs are bit-identical. The K local steps within
a round depend only on the shared average and may execute concurrently;
aggregation is the synchronization point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_vector, pinv
from .tasks import Partitioning, Task, column_block

__all__ = [
    "CocoaConfig",
    "CocoaState",
    "ClosedFormOperator",
    "SolverCache",
    "task_blocks",
    "block_pinvs",
    "aggregate_shares",
    "local_step",
    "share_update",
    "init_state",
    "inner_iteration",
    "run_cocoa",
    "build_operator",
    "closed_form_update",
    "uses_closed_form",
]


@dataclass(frozen=True)
class CocoaConfig:
    """Solver knobs shared by the iterative and closed-form paths.

    ``mode="auto"`` picks the closed form exactly when every block is at
    least as wide as the task's sample count, and falls back to the
    iterative loop otherwise. ``stop_tol`` stops the iterative loop once
    the step norm drops below ``stop_tol * max(1, ||x||)``.
    """

    num_nodes: int
    inner_iters: int = 1
    gamma: float = 1.0
    mode: str = "auto"
    stop_tol: float = 1e-13

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be >= 1")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.gamma != 1.0:
            raise NotImplementedError(
                "only gamma == 1 is supported; the printed update constants "
                "assume the local regularizer equals the node count"
            )
        if self.mode not in ("auto", "iterative", "closed_form"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class CocoaState:
    """Between-round snapshot: global estimate plus per-node shares.

    ``share_mean`` is kept equal to the ascending-order average of
    ``shares`` whenever a state is observed between rounds.
    """

    x: np.ndarray
    shares: list[np.ndarray]
    share_mean: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class ClosedFormOperator:
    """One-round affine update ``w_next = carry @ w_prev + inject @ targets``.

    ``inject`` stacks the per-block pseudoinverses scaled by 1/K;
    ``carry`` is ``I - inject @ features``. Valid only when every block is
    broad and full rank, in which case ``features @ inject`` is the
    identity and the update interpolates the task in one round.
    """

    carry: np.ndarray
    inject: np.ndarray


def task_blocks(task: Task, partition: Partitioning) -> list[np.ndarray]:
    """Contiguous copies of the K feature blocks, ascending node order."""
    return [column_block(task, partition, k) for k in range(1, partition.num_nodes + 1)]


def block_pinvs(task: Task, partition: Partitioning,
                blocks: list[np.ndarray] | None = None) -> list[np.ndarray]:
    """Pseudoinverse of each node's feature block, ascending node order."""
    if blocks is None:
        blocks = task_blocks(task, partition)
    return [pinv(b) for b in blocks]


class SolverCache:
    """Per-run memo of block data and one-round operators, keyed by task id.

    Cyclic schedules revisit the same task thousands of times; the cache
    makes the per-task factorizations a one-time cost. It is an internal
    optimization and never changes results.
    """

    def __init__(self):
        self._blocks: dict[int, list[np.ndarray]] = {}
        self._pinvs: dict[int, list[np.ndarray]] = {}
        self._operators: dict[int, ClosedFormOperator] = {}

    def blocks(self, task: Task, partition: Partitioning) -> list[np.ndarray]:
        if task.id not in self._blocks:
            self._blocks[task.id] = task_blocks(task, partition)
        return self._blocks[task.id]

    def pinvs(self, task: Task, partition: Partitioning) -> list[np.ndarray]:
        if task.id not in self._pinvs:
            self._pinvs[task.id] = block_pinvs(task, partition, self.blocks(task, partition))
        return self._pinvs[task.id]

    def operator(self, task: Task, partition: Partitioning) -> ClosedFormOperator:
        if task.id not in self._operators:
            self._operators[task.id] = build_operator(
                task, partition, self.pinvs(task, partition))
        return self._operators[task.id]


def aggregate_shares(shares) -> np.ndarray:
    """Average the shares, summing in ascending node order (bit-stable)."""
    total = np.array(shares[0], copy=True)
    for v in shares[1:]:
        total += v
    return total / len(shares)


def local_step(features_k: np.ndarray, targets: np.ndarray, share_mean: np.ndarray,
               num_nodes: int, pinv_k: np.ndarray | None = None) -> np.ndarray:
    """Node k's correction: least-norm solve of the aggregate residual, scaled by 1/K."""
    if features_k.shape[0] != targets.shape[0] or targets.shape != share_mean.shape:
        raise ValueError(
            f"inconsistent shapes: block {features_k.shape}, targets "
            f"{targets.shape}, share mean {share_mean.shape}"
        )
    if pinv_k is None:
        pinv_k = pinv(features_k)
    return (pinv_k @ (targets - share_mean)) / num_nodes


def share_update(features_k: np.ndarray, dx_k: np.ndarray, share_mean: np.ndarray,
                 num_nodes: int) -> np.ndarray:
    """Node k's refreshed share after taking the step ``dx_k``."""
    return share_mean + num_nodes * (features_k @ dx_k)


def init_state(task: Task, partition: Partitioning, w_init,
               blocks: list[np.ndarray] | None = None) -> CocoaState:
    """Warm-started state for one task.

    Each share is K times the node's local prediction, so the share mean
    starts at the full prediction ``features @ w_init``.
    """
    w_init = as_vector(w_init)
    if w_init.shape[0] != task.p:
        raise ValueError(f"w_init has length {w_init.shape[0]}, expected p={task.p}")
    if partition.p != task.p:
        raise ValueError(f"partition covers {partition.p} columns, task has {task.p}")
    if blocks is None:
        blocks = task_blocks(task, partition)
    num_nodes = partition.num_nodes
    x = w_init.copy()
    shares = [
        num_nodes * (blocks[k - 1] @ x[partition.block_slice(k)])
        for k in range(1, num_nodes + 1)
    ]
    return CocoaState(x=x, shares=shares, share_mean=aggregate_shares(shares))


def inner_iteration(state: CocoaState, task: Task, partition: Partitioning,
                    config: CocoaConfig,
                    blocks: list[np.ndarray] | None = None,
                    pinvs: list[np.ndarray] | None = None) -> CocoaState:
    """One synchronized round: aggregate, K local steps against the same
    aggregate, share refresh. Returns a new state."""
    if config.num_nodes != partition.num_nodes:
        raise ValueError(
            f"config expects {config.num_nodes} nodes, partition has {partition.num_nodes}"
        )
    if blocks is None:
        blocks = task_blocks(task, partition)
    if pinvs is None:
        pinvs = block_pinvs(task, partition, blocks)
    num_nodes = partition.num_nodes
    share_mean = aggregate_shares(state.shares)
    new_x = state.x.copy()
    new_shares = []
    for k in range(1, num_nodes + 1):
        sl = partition.block_slice(k)
        dx = local_step(blocks[k - 1], task.targets, share_mean, num_nodes, pinvs[k - 1])
        new_x[sl] = state.x[sl] + dx
        new_shares.append(share_update(blocks[k - 1], dx, share_mean, num_nodes))
    return CocoaState(
        x=new_x,
        shares=new_shares,
        share_mean=aggregate_shares(new_shares),
        iteration=state.iteration + 1,
    )


def uses_closed_form(task: Task, partition: Partitioning, config: CocoaConfig) -> bool:
    """Whether :func:`run_cocoa` will take the one-round closed-form path."""
    if config.mode == "closed_form":
        return True
    if config.mode == "iterative":
        return False
    return min(partition.sizes) >= task.n


def build_operator(task: Task, partition: Partitioning,
                   pinvs: list[np.ndarray] | None = None) -> ClosedFormOperator:
    """One-round update operator for tasks whose local blocks are all broad.

    Raises ``ValueError`` when some block is narrower than the sample
    count; such tasks need the iterative mode.
    """
    narrowest = min(partition.sizes)
    if narrowest < task.n:
        raise ValueError(
            f"closed form needs every block width >= n={task.n} (narrowest "
            f"block is {narrowest}); use iterative mode for this task"
        )
    if pinvs is None:
        pinvs = block_pinvs(task, partition)
    inject = np.vstack(pinvs) / partition.num_nodes
    carry = np.eye(task.p) - inject @ task.features
    return ClosedFormOperator(carry=carry, inject=inject)


def closed_form_update(op: ClosedFormOperator, w_prev, targets) -> np.ndarray:
    """Apply the one-round affine update to a warm start."""
    return op.carry @ w_prev + op.inject @ targets


def run_cocoa(task: Task, partition: Partitioning, w_init, config: CocoaConfig,
              cache: SolverCache | None = None) -> np.ndarray:
    """Solve one task warm-started at ``w_init``; returns the new estimate.

    The closed-form path applies the one-round operator. The iterative
    path runs up to ``config.inner_iters`` rounds, stopping early once the
    step norm falls below ``stop_tol * max(1, ||x||)``.
    """
    if uses_closed_form(task, partition, config):
        if cache is not None:
            op = cache.operator(task, partition)
        else:
            op = build_operator(task, partition)
        return closed_form_update(op, as_vector(w_init), task.targets)

    if cache is not None:
        blocks = cache.blocks(task, partition)
        pinvs = cache.pinvs(task, partition)
    else:
        blocks = task_blocks(task, partition)
        pinvs = block_pinvs(task, partition, blocks)
    state = init_state(task, partition, w_init, blocks)
    for _ in range(config.inner_iters):
        new_state = inner_iteration(state, task, partition, config, blocks, pinvs)
        step = float(np.linalg.norm(new_state.x - state.x))
        state = new_state
        if step <= config.stop_tol * max(1.0, float(np.linalg.norm(state.x))):
            break
    return state.x
