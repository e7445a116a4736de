"""Cross-module consistency checks, runnable via ``cocoasim selfcheck``.

Every check uses fixed seeds and pins its tolerance; a failure reports
the offending instance's seed so it can be reproduced directly. The
suite is the release gate: solver paths must agree, kernel and metric
properties must hold exactly, and runs must be deterministic.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import cocoa, metrics, netsim
from .continual import ContinualConfig, run_continual
from .linalg import matmul, min_norm_solve, pinv
from .tasks import (
    TaskSchedule,
    Task,
    build_sequence,
    column_block,
    dump_task_csv,
    gen_gaussian_task,
    load_task_csv,
    make_partition,
    shared_generator,
)

__all__ = ["CheckResult", "run_selfcheck", "format_report"]

PAPER_P = 160
PAPER_SIZES = (16, 32, 48, 64)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise difference relative to the vectors' scale."""
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((771, seed)))


def _check_penrose() -> str:
    shapes = [(2, 5), (5, 2), (4, 4)]
    for seed, shape in enumerate(shapes):
        m = _rng(seed).standard_normal(shape)
        detail = _penrose_violation(m, f"shape {shape} seed {seed}")
        if detail:
            return detail
    rng = _rng(99)
    lowrank = rng.standard_normal((3, 2)) @ rng.standard_normal((2, 3))
    return _penrose_violation(lowrank, "3x3 rank-2 seed 99")


def _penrose_violation(m: np.ndarray, label: str) -> str:
    mp = pinv(m)
    fro = np.linalg.norm
    if fro(m @ mp @ m - m) > 1e-9 * fro(m):
        return f"{label}: M M+ M != M"
    if fro(mp @ m @ mp - mp) > 1e-9 * fro(mp):
        return f"{label}: M+ M M+ != M+"
    if fro(m @ mp - (m @ mp).T) > 1e-9 * max(fro(m @ mp), 1.0):
        return f"{label}: M M+ not symmetric"
    if fro(mp @ m - (mp @ m).T) > 1e-9 * max(fro(mp @ m), 1.0):
        return f"{label}: M+ M not symmetric"
    return ""


def _check_broad_identity() -> str:
    for seed, (n, p_k) in enumerate([(2, 5), (10, 16), (10, 64), (8, 8)]):
        m = _rng(200 + seed).standard_normal((n, p_k))
        err = np.linalg.norm(m @ pinv(m) - np.eye(n))
        if err > 1e-9:
            return f"shape ({n},{p_k}) seed {200 + seed}: ||M M+ - I|| = {err:.2e}"
    return ""


def _check_min_norm_matches_pinv() -> str:
    for seed, shape in enumerate([(3, 8), (8, 3), (5, 5)]):
        rng = _rng(300 + seed)
        a = rng.standard_normal(shape)
        y = rng.standard_normal(shape[0])
        direct = min_norm_solve(a, y)
        via_pinv = matmul(pinv(a), y.reshape(-1, 1)).ravel()
        if _rel(direct, via_pinv) > 1e-12:
            return f"shape {shape} seed {300 + seed}: lstsq and pinv routes disagree"
    return ""


def _check_task_construction() -> str:
    spec = shared_generator(24)
    task = gen_gaussian_task(1, 5, 24, spec.w_star, master_seed=401)
    if float(np.linalg.norm(task.features @ spec.w_star - task.targets)) != 0.0:
        return "constructed targets differ from features @ w_star"
    again = gen_gaussian_task(1, 5, 24, spec.w_star, master_seed=401)
    if not (np.array_equal(task.features, again.features)
            and np.array_equal(task.targets, again.targets)):
        return "regenerating (seed, id) did not reproduce the task bit-for-bit"
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "task.csv")
        dump_task_csv(task, path)
        loaded = load_task_csv(path, task_id=1)
    drift = np.linalg.norm(loaded.features @ spec.w_star - loaded.targets)
    if drift > 1e-12 * np.linalg.norm(loaded.targets):
        return f"CSV round-trip drift {drift:.2e}"
    return ""


def _check_partition_cover() -> str:
    partition = make_partition(PAPER_P, PAPER_SIZES)
    task = gen_gaussian_task(1, 4, PAPER_P, np.ones(PAPER_P), master_seed=405)
    blocks = [column_block(task, partition, k) for k in range(1, 5)]
    if not np.array_equal(np.hstack(blocks), task.features):
        return "reassembled blocks differ from the original matrix"
    ranges = [partition.block_range(k) for k in range(1, 5)]
    if ranges != [(0, 16), (16, 48), (48, 96), (96, 160)]:
        return f"unexpected block ranges {ranges}"
    return ""


def _paper_instance(seed: int, n: int = 10):
    partition = make_partition(PAPER_P, PAPER_SIZES)
    task = gen_gaussian_task(1, n, PAPER_P, np.ones(PAPER_P), master_seed=seed)
    return task, partition


def _check_one_round_convergence() -> str:
    for seed in range(500, 520):
        task, partition = _paper_instance(seed)
        rng = _rng(seed)
        w_init = rng.standard_normal(PAPER_P)
        config = cocoa.CocoaConfig(num_nodes=4, inner_iters=2, mode="iterative")
        state = cocoa.init_state(task, partition, w_init)
        state = cocoa.inner_iteration(state, task, partition, config)
        residual = np.linalg.norm(task.features @ state.x - task.targets)
        if residual > 1e-9 * np.linalg.norm(task.targets):
            return f"seed {seed}: residual after round one = {residual:.2e}"
        after = cocoa.inner_iteration(state, task, partition, config)
        step = np.linalg.norm(after.x - state.x)
        if step > 1e-12 * np.linalg.norm(state.x):
            return f"seed {seed}: round-two step {step:.2e} not vanishing"
    return ""


def _check_path_equivalence() -> str:
    partition = make_partition(PAPER_P, PAPER_SIZES)
    iterative = cocoa.CocoaConfig(num_nodes=4, inner_iters=1, mode="iterative")
    for seed in range(600, 700):
        rng = _rng(seed)
        n = int(rng.integers(1, 11))
        task = gen_gaussian_task(1, n, PAPER_P, np.ones(PAPER_P), master_seed=seed)
        w_init = rng.standard_normal(PAPER_P)
        closed = cocoa.closed_form_update(
            cocoa.build_operator(task, partition), w_init, task.targets)
        stepped = cocoa.run_cocoa(task, partition, w_init, iterative)
        networked = netsim.run_network(task, partition, w_init, num_rounds=1)
        if not np.array_equal(stepped, networked):
            return f"seed {seed}: network and monolithic paths not bit-identical"
        err = _rel(closed, stepped)
        if err > 1e-12:
            return f"seed {seed}: closed form vs iterative relative error {err:.2e}"
    return ""


def _check_aggregation_determinism() -> str:
    task, partition = _paper_instance(710, n=6)
    config = cocoa.CocoaConfig(num_nodes=4, inner_iters=3, mode="iterative")
    w_init = _rng(710).standard_normal(PAPER_P)
    first = cocoa.run_cocoa(task, partition, w_init, config)
    second = cocoa.run_cocoa(task, partition, w_init, config)
    if not np.array_equal(first, second):
        return "two identical runs disagree bit-for-bit"
    return ""


def _check_single_node_exact() -> str:
    rng = _rng(720)
    a = rng.standard_normal((6, 6))
    x_true = rng.standard_normal(6)
    task = Task(id=1, features=a, targets=a @ x_true)
    partition = make_partition(6, (6,))
    config = cocoa.CocoaConfig(num_nodes=1, inner_iters=1, mode="iterative")
    solved = cocoa.run_cocoa(task, partition, np.zeros(6), config)
    direct = np.linalg.solve(a, task.targets)
    if np.linalg.norm(solved - direct) > 1e-10 * np.linalg.norm(direct):
        return "single-node round does not match the direct solve"
    return ""


def _check_network_equivalence() -> str:
    cases = [
        (PAPER_P, PAPER_SIZES, 10, 3, 730),
        (8, (4, 4), 32, 200, 731),  # narrow blocks, multi-round
    ]
    for p, sizes, n, rounds, seed in cases:
        partition = make_partition(p, sizes)
        task = gen_gaussian_task(1, n, p, np.ones(p), master_seed=seed)
        w_init = _rng(seed).standard_normal(p)
        config = cocoa.CocoaConfig(num_nodes=len(sizes), inner_iters=rounds,
                                   mode="iterative", stop_tol=0.0)
        state = cocoa.init_state(task, partition, w_init)
        blocks = cocoa.task_blocks(task, partition)
        pinvs = cocoa.block_pinvs(task, partition, blocks)
        for _ in range(rounds):
            state = cocoa.inner_iteration(state, task, partition, config, blocks, pinvs)
        coordinator, nodes = netsim.spawn_network(task, partition, w_init)
        for _ in range(rounds):
            netsim.run_round(coordinator, nodes)
        if not np.array_equal(netsim.network_solution(nodes), state.x):
            return f"seed {seed}: distributed run differs from monolithic"
        expected = 2 * len(sizes) * rounds
        if coordinator.messages_exchanged != expected:
            return (f"seed {seed}: {coordinator.messages_exchanged} messages, "
                    f"expected {expected}")
    return ""


def _continual_run(seed: int):
    p, sizes = 24, (8, 8, 8)
    partition = make_partition(p, sizes)
    spec = shared_generator(p)
    schedule = TaskSchedule(mode="cyclic", num_tasks=4, repeats=3)
    tasks, sequence = build_sequence(schedule, spec, 3, p, seed)
    config = ContinualConfig(
        cocoa=cocoa.CocoaConfig(num_nodes=3, inner_iters=1, mode="auto"),
        eval_stride=1, record_w=True)
    return tasks, sequence, partition, run_continual(
        tasks, sequence, partition, config, spec.reference)


def _check_latest_task_property() -> str:
    tasks, sequence, _, trace = _continual_run(740)
    for t, m in enumerate(sequence, start=1):
        w_t = trace.w_history[t - 1]
        task = tasks[m - 1]
        residual = np.linalg.norm(task.features @ w_t - task.targets)
        if residual > 1e-9 * np.linalg.norm(task.targets):
            return f"step {t}: latest-task residual {residual:.2e}"
    return ""


def _check_recurrence_fidelity() -> str:
    tasks, sequence, partition, trace = _continual_run(741)
    w_prev = np.zeros(tasks[0].p)
    for t, m in enumerate(sequence, start=1):
        op = cocoa.build_operator(tasks[m - 1], partition)
        expected = cocoa.closed_form_update(op, w_prev, tasks[m - 1].targets)
        w_t = trace.w_history[t - 1]
        if _rel(w_t, expected) > 1e-12:
            return f"step {t}: driver deviates from the one-round operator"
        w_prev = w_t
    return ""


def _check_run_determinism() -> str:
    _, _, _, first = _continual_run(742)
    _, _, _, second = _continual_run(742)
    if not np.array_equal(first.final_w, second.final_w):
        return "final iterates differ between identical runs"
    if len(first.records) != len(second.records) or any(
            a != b for a, b in zip(first.records, second.records)):
        return "metric records differ between identical runs"
    return ""


def _check_forgetting_cross_sum() -> str:
    p = 12
    spec = shared_generator(p)
    schedule = TaskSchedule(mode="cyclic", num_tasks=3, repeats=4)
    tasks, sequence = build_sequence(schedule, spec, 2, p, 750)
    w = _rng(750).standard_normal(p)
    for t in (1, 5, len(sequence)):
        fast = metrics.forgetting(tasks, sequence, w, t)
        literal = sum(metrics.task_loss(tasks[m - 1], w) for m in sequence[:t]) / t
        if abs(fast - literal) > 1e-12 * max(1.0, abs(literal)):
            return f"t={t}: weighted forgetting {fast!r} vs literal mean {literal!r}"
    return ""


def _check_loss_scale() -> str:
    task = gen_gaussian_task(1, 4, 10, np.ones(10), master_seed=751)
    w = _rng(751).standard_normal(10)
    scaled = Task(id=1, features=3.0 * task.features, targets=3.0 * task.targets)
    base = metrics.task_loss(task, w)
    if abs(metrics.task_loss(scaled, w) - 9.0 * base) > 1e-12 * max(1.0, 9.0 * base):
        return "scaling (features, targets) by c did not scale the loss by c^2"
    return ""


def _check_offline_oracle() -> str:
    p = 10
    spec = shared_generator(p)
    tasks, _ = build_sequence(TaskSchedule("one_shot", 4), spec, 3, p, 752)
    solution = metrics.offline_oracle(tasks)
    from .tasks import stack_offline

    features, targets = stack_offline(tasks)
    residual = np.linalg.norm(features @ solution - targets)
    if residual > 1e-9 * np.linalg.norm(targets):
        return f"stacked residual {residual:.2e} on a consistent system"
    if np.linalg.norm(solution - spec.w_star) > 1e-8 * np.linalg.norm(spec.w_star):
        return "full-rank tall stack did not recover the shared generator"
    return ""


_CHECKS = [
    ("pseudoinverse Penrose conditions", _check_penrose),
    ("broad full-rank right inverse", _check_broad_identity),
    ("min-norm solve vs pinv route", _check_min_norm_matches_pinv),
    ("task construction and CSV round-trip", _check_task_construction),
    ("partition blocks cover all columns", _check_partition_cover),
    ("one-round convergence on broad blocks", _check_one_round_convergence),
    ("closed-form / iterative / network equivalence", _check_path_equivalence),
    ("aggregation determinism", _check_aggregation_determinism),
    ("single-node round equals direct solve", _check_single_node_exact),
    ("network bit-identity and message count", _check_network_equivalence),
    ("latest task solved at every outer step", _check_latest_task_property),
    ("outer recurrence matches one-round operator", _check_recurrence_fidelity),
    ("continual run determinism", _check_run_determinism),
    ("forgetting equals literal presentation mean", _check_forgetting_cross_sum),
    ("loss scales quadratically with the data", _check_loss_scale),
    ("offline oracle solves the stacked system", _check_offline_oracle),
]


def run_selfcheck() -> list[CheckResult]:
    """Run every check; failures carry the reproducing detail."""
    results = []
    for name, fn in _CHECKS:
        try:
            detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            detail = f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name=name, passed=not detail, detail=detail))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for res in results:
        mark = "PASS" if res.passed else "FAIL"
        suffix = f" ({res.detail})" if res.detail else ""
        lines.append(f"[{mark}] {res.name}{suffix}")
    failed = [r for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        lines.append(f"first failure: {failed[0].name}: {failed[0].detail}")
    return "\n".join(lines)
