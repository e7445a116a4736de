"""In-process network simulation of the solver as coordinator/node rounds.

Transport is logical mailboxes rather than sockets: the value of the
simulation is the algorithm's communication structure, and equivalence
testing against the monolithic loop needs determinism that real
networking would obscure. Rounds are synchronous; the coordinator
enforces a full barrier between gathering the shares and scattering
their mean. Because the coordinator aggregates in ascending node id,
results do not depend on how node updates are scheduled, and the
concatenated solution is bit-identical to :func:`cocoasim.cocoa.run_cocoa`
in iterative mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .cocoa import aggregate_shares, block_pinvs, local_step, share_update, task_blocks
from .linalg import as_vector
from .tasks import Partitioning, Task

__all__ = [
    "ProtocolError",
    "RoundMessage",
    "NodeHandle",
    "Coordinator",
    "spawn_network",
    "run_round",
    "network_solution",
    "run_network",
]


class ProtocolError(RuntimeError):
    """A node failed to participate in a synchronous round."""


@dataclass
class RoundMessage:
    """One vector exchanged between a node and the coordinator."""

    direction: str  # "gather" | "scatter"
    node_id: int
    payload: np.ndarray
    round_index: int


@dataclass
class NodeHandle:
    """One simulated node: its column block, local data, and local state."""

    node_id: int
    block: tuple[int, int]
    local_features: np.ndarray
    local_targets: np.ndarray
    local_pinv: np.ndarray
    local_x: np.ndarray
    local_v: np.ndarray
    failed: bool = False  # fault-injection hook: drops this node's gather

    def apply_update(self, share_mean: np.ndarray, num_nodes: int) -> np.ndarray:
        """Take the local step against the scattered mean; returns the step."""
        dx = local_step(self.local_features, self.local_targets, share_mean,
                        num_nodes, self.local_pinv)
        self.local_x = self.local_x + dx
        self.local_v = share_update(self.local_features, dx, share_mean, num_nodes)
        return dx


@dataclass
class Coordinator:
    """Round bookkeeping: barrier state, message count, optional trace."""

    num_nodes: int
    targets: np.ndarray
    round_index: int = 0
    messages_exchanged: int = 0
    last_share_mean: np.ndarray | None = None
    trace: TextIO | None = field(default=None, repr=False)


def spawn_network(task: Task, partition: Partitioning, w_init,
                  trace: TextIO | None = None) -> tuple[Coordinator, list[NodeHandle]]:
    """Create the coordinator and one handle per node.

    Every node receives a contiguous copy of its feature block, its slice
    of the warm start, and a share seeded at ``num_nodes`` times its local
    prediction so the share mean starts at the full prediction.
    """
    w_init = as_vector(w_init)
    if w_init.shape[0] != task.p:
        raise ValueError(f"w_init has length {w_init.shape[0]}, expected p={task.p}")
    if partition.p != task.p:
        raise ValueError(f"partition covers {partition.p} columns, task has {task.p}")
    num_nodes = partition.num_nodes
    blocks = task_blocks(task, partition)
    pinvs = block_pinvs(task, partition, blocks)
    nodes = []
    for k in range(1, num_nodes + 1):
        start, stop = partition.block_range(k)
        local_x = w_init[start:stop].copy()
        nodes.append(NodeHandle(
            node_id=k,
            block=(start, stop),
            local_features=blocks[k - 1],
            local_targets=task.targets.copy(),
            local_pinv=pinvs[k - 1],
            local_x=local_x,
            local_v=num_nodes * (blocks[k - 1] @ local_x),
        ))
    return Coordinator(num_nodes=num_nodes, targets=task.targets.copy(), trace=trace), nodes


def run_round(coordinator: Coordinator, nodes: list[NodeHandle]) -> None:
    """One synchronous round: gather all shares, scatter their mean, update.

    Exactly ``2 * num_nodes`` messages are exchanged. A node marked failed
    surfaces as a :class:`ProtocolError`; there is no fault tolerance.
    """
    r = coordinator.round_index
    ordered = sorted(nodes, key=lambda node: node.node_id)
    ids = [node.node_id for node in ordered]
    if ids != list(range(1, coordinator.num_nodes + 1)):
        raise ProtocolError(
            f"round {r}: expected nodes 1..{coordinator.num_nodes}, got {ids}"
        )

    gathered = []
    for node in ordered:
        if node.failed:
            raise ProtocolError(f"round {r}: no share received from node {node.node_id}")
        message = RoundMessage("gather", node.node_id, node.local_v, r)
        coordinator.messages_exchanged += 1
        gathered.append(message.payload)

    # Barrier: every share is in before anything is scattered.
    share_mean = aggregate_shares(gathered)
    coordinator.last_share_mean = share_mean

    step_norms = []
    for node in ordered:
        RoundMessage("scatter", node.node_id, share_mean, r)
        coordinator.messages_exchanged += 1
        dx = node.apply_update(share_mean, coordinator.num_nodes)
        step_norms.append(float(np.linalg.norm(dx)))

    coordinator.round_index += 1
    if coordinator.trace is not None:
        residual = float(np.linalg.norm(share_mean - coordinator.targets))
        steps = ",".join(f"{s:.6e}" for s in step_norms)
        coordinator.trace.write(f"round={r} residual={residual:.6e} steps={steps}\n")


def network_solution(nodes: list[NodeHandle]) -> np.ndarray:
    """Concatenate the local estimates in ascending node id."""
    ordered = sorted(nodes, key=lambda node: node.node_id)
    return np.concatenate([node.local_x for node in ordered])


def run_network(task: Task, partition: Partitioning, w_init, num_rounds: int,
                trace: TextIO | None = None) -> np.ndarray:
    """Spawn a network, run ``num_rounds`` rounds, return the solution."""
    coordinator, nodes = spawn_network(task, partition, w_init, trace)
    for _ in range(num_rounds):
        run_round(coordinator, nodes)
    return network_solution(nodes)
