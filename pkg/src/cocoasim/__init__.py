"""Continual learning of linear models with the CoCoA distributed solver.

A library plus CLI for simulating K nodes that each own a column block of
the parameter vector while regression tasks arrive sequentially. The
package provides the solver (iterative rounds and their one-round closed
form), an in-process network simulation of the same rounds, the outer
warm-started training loop, forgetting/convergence/distance metrics, and
an experiment harness that sweeps task-count and sample-count grids into
CSV files and figures.
"""

from .cocoa import (
    ClosedFormOperator,
    CocoaConfig,
    CocoaState,
    SolverCache,
    build_operator,
    closed_form_update,
    inner_iteration,
    local_step,
    run_cocoa,
)
from .continual import ContinualConfig, RunTrace, run_continual, warm_start
from .linalg import matmul, min_norm_solve, pinv
from .metrics import (
    MetricRecord,
    distance_to_generator,
    forgetting,
    offline_oracle,
    relative_last_step,
    task_loss,
)
from .netsim import NodeHandle, ProtocolError, run_network, run_round, spawn_network
from .tasks import (
    GeneratorSpec,
    Partitioning,
    Task,
    TaskSchedule,
    alternating_generator,
    build_sequence,
    column_block,
    gen_gaussian_task,
    make_partition,
    shared_generator,
    stack_offline,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # linalg
    "matmul", "pinv", "min_norm_solve",
    # tasks
    "Task", "Partitioning", "TaskSchedule", "GeneratorSpec",
    "gen_gaussian_task", "make_partition", "column_block", "build_sequence",
    "stack_offline", "shared_generator", "alternating_generator",
    # solver
    "CocoaConfig", "CocoaState", "ClosedFormOperator", "SolverCache",
    "local_step", "inner_iteration", "run_cocoa", "build_operator",
    "closed_form_update",
    # network simulation
    "NodeHandle", "ProtocolError", "spawn_network", "run_round", "run_network",
    # continual loop
    "ContinualConfig", "RunTrace", "warm_start", "run_continual",
    # metrics
    "MetricRecord", "task_loss", "forgetting", "relative_last_step",
    "distance_to_generator", "offline_oracle",
]
