"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS/FAIL line
per criterion. Budgets are wall-clock and generous on commodity hardware.

Criterion 7 is expected to fail and is kept failing on purpose: it pins
the naive reading of "more tasks means less one-shot forgetting", but at
n_m = 10 the amplification ridge where the total sample count N = M * n_m
equals the parameter count p = 160 falls exactly on M = 16, so the median
final forgetting rises from M = 2 to M = 16 (roughly 11 -> 73) before
collapsing for larger M (about 9e-2 at M = 256 and 2e-11 at M = 1024).
The check documents that regime boundary rather than papering over it.
"""

import time
from statistics import median

import numpy as np

from cocoasim.cocoa import (
    CocoaConfig,
    block_pinvs,
    build_operator,
    closed_form_update,
    init_state,
    inner_iteration,
    run_cocoa,
    task_blocks,
)
from cocoasim.continual import ContinualConfig, run_continual
from cocoasim.netsim import run_network
from cocoasim.selfcheck import format_report, run_selfcheck
from cocoasim.tasks import (
    TaskSchedule,
    alternating_generator,
    build_sequence,
    gen_gaussian_task,
    make_partition,
    shared_generator,
)

P = 160
SIZES = (16, 32, 48, 64)
PARTITION = make_partition(P, SIZES)


def _report(num, name, ok, detail):
    print(f"\nACCEPTANCE {num} ({name}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def _rng(seed):
    return np.random.default_rng(np.random.SeedSequence((61, seed)))


def _continual(num_samples, num_tasks, repeats, seed, generator="shared",
               schedule_mode="cyclic", eval_stride=None):
    spec = shared_generator(P) if generator == "shared" else alternating_generator(P)
    schedule = TaskSchedule(schedule_mode, num_tasks, repeats=repeats)
    tasks, sequence = build_sequence(schedule, spec, num_samples, P, seed)
    config = ContinualConfig(
        cocoa=CocoaConfig(num_nodes=4, mode="auto"),
        eval_stride=eval_stride or len(sequence),
    )
    return run_continual(tasks, sequence, partition=PARTITION, config=config,
                         reference=spec.reference)


def _final_forgetting(trace):
    return float("inf") if trace.diverged else trace.records[-1].forgetting


def test_criterion_1_one_round_convergence():
    start = time.perf_counter()
    config = CocoaConfig(num_nodes=4, inner_iters=2, mode="iterative")
    worst_resid, worst_step = 0.0, 0.0
    for seed in range(100):
        task = gen_gaussian_task(1, 10, P, np.ones(P), master_seed=seed)
        w_init = _rng(seed).standard_normal(P)
        state = init_state(task, PARTITION, w_init)
        state = inner_iteration(state, task, PARTITION, config)
        resid = np.linalg.norm(task.features @ state.x - task.targets) \
            / np.linalg.norm(task.targets)
        after = inner_iteration(state, task, PARTITION, config)
        step = np.linalg.norm(after.x - state.x) / np.linalg.norm(state.x)
        worst_resid = max(worst_resid, resid)
        worst_step = max(worst_step, step)
    elapsed = time.perf_counter() - start
    ok = worst_resid <= 1e-9 and worst_step <= 1e-12 and elapsed < 5.0
    _report(1, "one-round convergence", ok,
            f"worst residual {worst_resid:.2e} (<=1e-9), worst second-round step "
            f"{worst_step:.2e} (<=1e-12), 100 seeds in {elapsed:.1f}s (<5s)")


def test_criterion_2_path_equivalence():
    start = time.perf_counter()
    iterative = CocoaConfig(num_nodes=4, inner_iters=1, mode="iterative")
    worst = 0.0
    bit_identical = True
    for seed in range(100):
        rng = _rng(1000 + seed)
        n = int(rng.integers(1, 11))
        task = gen_gaussian_task(1, n, P, np.ones(P), master_seed=seed)
        w_init = rng.standard_normal(P)
        closed = closed_form_update(build_operator(task, PARTITION), w_init, task.targets)
        stepped = run_cocoa(task, PARTITION, w_init, iterative)
        networked = run_network(task, PARTITION, w_init, num_rounds=1)
        bit_identical &= bool(np.array_equal(stepped, networked))
        scale = max(float(np.max(np.abs(closed))), float(np.max(np.abs(stepped))), 1.0)
        worst = max(worst, float(np.max(np.abs(closed - stepped))) / scale)
    elapsed = time.perf_counter() - start
    ok = bit_identical and worst <= 1e-12 and elapsed < 10.0
    _report(2, "closed-form / iterative / netsim equivalence", ok,
            f"network bit-identical: {bit_identical}, closed-vs-iterative relative "
            f"error {worst:.2e} (<=1e-12), 100 instances in {elapsed:.1f}s (<10s)")


def test_criterion_3_underparameterized_convergence():
    start = time.perf_counter()
    p, sizes, n = 8, (4, 4), 32
    partition = make_partition(p, sizes)
    config = CocoaConfig(num_nodes=2, inner_iters=1, mode="iterative")
    w_star = np.ones(p)
    failures = []
    for seed in range(10):
        task = gen_gaussian_task(1, n, p, w_star, master_seed=seed)
        blocks = task_blocks(task, partition)
        pinvs = block_pinvs(task, partition, blocks)
        state = init_state(task, partition, np.zeros(p), blocks)
        residuals = []
        converged_at = None
        for i in range(1, 100_001):
            state = inner_iteration(state, task, partition, config, blocks, pinvs)
            if i % 100 == 0:
                residuals.append(np.linalg.norm(task.features @ state.x - task.targets))
                if np.linalg.norm(state.x - w_star) <= 1e-6 * np.linalg.norm(w_star):
                    converged_at = i
                    break
        monotone = all(b <= a for a, b in zip(residuals, residuals[1:]))
        if converged_at is None or not monotone:
            failures.append((seed, converged_at, monotone))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 10.0
    _report(3, "underparameterized convergence", ok,
            f"10 seeds reached 1e-6 with non-increasing checkpoint residuals in "
            f"{elapsed:.1f}s (<10s); failures: {failures or 'none'}")


def test_criterion_4_total_samples_exceed_parameters():
    start = time.perf_counter()
    dists, forgets = [], []
    for seed in range(5):
        trace = _continual(num_samples=8, num_tasks=40, repeats=1000, seed=seed)
        assert not trace.diverged
        dists.append(trace.records[-1].dist_to_gen)
        forgets.append(trace.records[-1].forgetting)
    elapsed = time.perf_counter() - start
    med_dist, med_forget = median(dists), median(forgets)
    tol = 1e-3 * np.sqrt(P)
    ok = med_dist <= tol and med_forget <= 1e-8 and elapsed < 120.0
    _report(4, "N > p recovers the generator", ok,
            f"median distance {med_dist:.2e} (<={tol:.2e}), median forgetting "
            f"{med_forget:.2e} (<=1e-8), 5 seeds in {elapsed:.1f}s (<2min)")


def test_criterion_5_near_square_pathology():
    start = time.perf_counter()
    medians = {}
    diverged_counts = {}
    for num_tasks in (40, 80, 160):
        finals = []
        diverged = 0
        for seed in range(5):
            trace = _continual(num_samples=2, num_tasks=num_tasks, repeats=2000,
                               seed=seed)
            finals.append(_final_forgetting(trace))
            diverged += trace.diverged
        medians[num_tasks] = median(finals)
        diverged_counts[num_tasks] = diverged
    elapsed = time.perf_counter() - start
    neighbours = max(medians[40], medians[160])
    separated = medians[80] >= 10.0 * neighbours
    guard = diverged_counts[80] >= 3
    ok = (separated or guard) and elapsed < 180.0
    _report(5, "N ~ p pathology", ok,
            f"median forgetting at 2000 cycles: M=40 {medians[40]:.2e}, "
            f"M=80 {medians[80]:.2e}, M=160 {medians[160]:.2e}; M=80 diverged "
            f"{diverged_counts[80]}/5; 10x separation: {separated}; "
            f"{elapsed:.1f}s (<3min)")


def test_criterion_6_underdetermined_interpolation_without_recovery():
    dists, forgets = [], []
    for seed in range(5):
        trace = _continual(num_samples=2, num_tasks=10, repeats=1000, seed=seed)
        assert not trace.diverged
        dists.append(trace.records[-1].dist_to_gen)
        forgets.append(trace.records[-1].forgetting)
    med_dist, med_forget = median(dists), median(forgets)
    ok = med_forget <= 1e-8 and med_dist >= 1.0
    _report(6, "N < p solves tasks but not the generator", ok,
            f"median forgetting {med_forget:.2e} (<=1e-8), median distance "
            f"{med_dist:.2f} (>=1)")


def test_criterion_7_one_shot_forgetting_trend():
    start = time.perf_counter()
    medians = {}
    for num_tasks in (2, 16):
        finals = [
            _final_forgetting(_continual(num_samples=10, num_tasks=num_tasks,
                                         repeats=1, seed=seed,
                                         schedule_mode="one_shot"))
            for seed in range(20)
        ]
        medians[num_tasks] = median(finals)
    elapsed = time.perf_counter() - start
    ok = medians[16] <= medians[2] / 10.0 and elapsed < 30.0
    _report(7, "one-shot forgetting trend", ok,
            f"median final forgetting M=2 {medians[2]:.3e} vs M=16 "
            f"{medians[16]:.3e}; expected a >=10x decrease, but M=16 sits on "
            f"the N=p amplification ridge (20 seeds in {elapsed:.1f}s)")


def test_criterion_8_alternating_generators():
    start = time.perf_counter()
    small = _continual(num_samples=2, num_tasks=2, repeats=1000, seed=0,
                       generator="alternating", eval_stride=100)
    small_ok = (not small.diverged) and any(
        r.forgetting <= 1e-6 and r.t <= 2000 for r in small.records)

    large = _continual(num_samples=2, num_tasks=150, repeats=1000, seed=0,
                       generator="alternating", eval_stride=150 * 7)
    late = [r for r in large.records if r.t > 2000]
    large_ok = (not large.diverged) and late and all(r.forgetting > 1.0 for r in late)
    band = (min(r.forgetting for r in late), max(r.forgetting for r in late)) \
        if late else (float("nan"),) * 2
    elapsed = time.perf_counter() - start
    ok = small_ok and large_ok and elapsed < 180.0
    _report(8, "alternating generators", ok,
            f"M=2 reached <=1e-6 within 2000 steps: {small_ok}; M=150 forgetting "
            f"over t>2000 stayed in [{band[0]:.2f}, {band[1]:.2f}] (> 1): "
            f"{large_ok}; {elapsed:.1f}s (<3min)")


def test_criterion_9_property_suites():
    start = time.perf_counter()
    results = run_selfcheck()
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in results) and elapsed < 30.0
    failed = [r.name for r in results if not r.passed]
    _report(9, "metric and kernel property suites", ok,
            f"{sum(r.passed for r in results)}/{len(results)} selfchecks passed "
            f"in {elapsed:.1f}s (<30s)" + (f"; failed: {failed}" if failed else ""))
    if failed:
        print(format_report(results))
