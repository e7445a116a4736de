import io

import numpy as np
import pytest

from cocoasim import cocoa
from cocoasim.netsim import (
    ProtocolError,
    network_solution,
    run_network,
    run_round,
    spawn_network,
)
from cocoasim.tasks import Task, gen_gaussian_task, make_partition

P = 160
SIZES = (16, 32, 48, 64)


def rng_for(seed):
    return np.random.default_rng(np.random.SeedSequence((31, seed)))


def instance(seed, n=10, p=P, sizes=SIZES):
    task = gen_gaussian_task(1, n, p, np.ones(p), master_seed=seed)
    return task, make_partition(p, sizes)


class TestSpawn:
    def test_single_node_holds_everything(self):
        task, part = instance(0, n=3, p=6, sizes=(6,))
        _, nodes = spawn_network(task, part, np.zeros(6))
        assert len(nodes) == 1
        np.testing.assert_array_equal(nodes[0].local_features, task.features)

    def test_blocks_cover_all_unknowns(self):
        task, part = instance(1)
        _, nodes = spawn_network(task, part, np.zeros(P))
        assert sum(len(node.local_x) for node in nodes) == P

    def test_share_mean_is_full_prediction(self):
        task, part = instance(2, n=5)
        w = rng_for(2).standard_normal(P)
        _, nodes = spawn_network(task, part, w)
        mean = cocoa.aggregate_shares([node.local_v for node in nodes])
        np.testing.assert_allclose(mean, task.features @ w, rtol=1e-12, atol=1e-12)


class TestRound:
    def test_message_count_per_round(self):
        task, part = instance(3)
        coordinator, nodes = spawn_network(task, part, np.zeros(P))
        run_round(coordinator, nodes)
        assert coordinator.messages_exchanged == 2 * 4
        run_round(coordinator, nodes)
        assert coordinator.messages_exchanged == 2 * 4 * 2

    def test_total_message_complexity(self):
        task, part = instance(4, n=8, p=8, sizes=(4, 4))
        coordinator, nodes = spawn_network(task, part, np.zeros(8))
        rounds = 25
        for _ in range(rounds):
            run_round(coordinator, nodes)
        assert coordinator.messages_exchanged == 2 * 2 * rounds

    def test_round_on_converged_state_is_fixed_point(self):
        # dyadic data keeps the share aggregate exact, so the fixed point is bitwise
        rng = rng_for(5)
        features = rng.integers(-8, 9, size=(3, 8)).astype(float) / 4.0
        targets = rng.integers(-8, 9, size=3).astype(float) / 4.0
        task = Task(id=1, features=features, targets=targets)
        part = make_partition(8, (4, 4))
        coordinator, nodes = spawn_network(task, part, np.zeros(8))
        for node in nodes:
            node.local_v = task.targets.copy()
        before_x = [node.local_x.copy() for node in nodes]
        run_round(coordinator, nodes)
        for node, x in zip(nodes, before_x):
            np.testing.assert_array_equal(node.local_x, x)
            np.testing.assert_array_equal(node.local_v, task.targets)

    def test_failed_node_raises_protocol_error(self):
        task, part = instance(6)
        coordinator, nodes = spawn_network(task, part, np.zeros(P))
        nodes[2].failed = True
        with pytest.raises(ProtocolError, match="node 3"):
            run_round(coordinator, nodes)

    def test_missing_node_raises_protocol_error(self):
        task, part = instance(7)
        coordinator, nodes = spawn_network(task, part, np.zeros(P))
        with pytest.raises(ProtocolError, match="expected nodes"):
            run_round(coordinator, nodes[:-1])

    def test_trace_log_lines(self):
        task, part = instance(8)
        log = io.StringIO()
        run_network(task, part, np.zeros(P), num_rounds=3, trace=log)
        lines = log.getvalue().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("round=0 residual=")
        assert "steps=" in lines[0]


class TestEquivalence:
    @pytest.mark.parametrize("seed,n,p,sizes,rounds", [
        (10, 10, P, SIZES, 1),
        (11, 4, P, SIZES, 3),
        (12, 32, 8, (4, 4), 200),   # narrow blocks, long iterative run
        (13, 5, 12, (12,), 2),      # single node
    ])
    def test_bitwise_equal_to_monolithic(self, seed, n, p, sizes, rounds):
        task, part = instance(seed, n=n, p=p, sizes=sizes)
        w_init = rng_for(seed).standard_normal(p)
        config = cocoa.CocoaConfig(num_nodes=len(sizes), inner_iters=rounds,
                                   mode="iterative", stop_tol=0.0)
        blocks = cocoa.task_blocks(task, part)
        pinvs = cocoa.block_pinvs(task, part, blocks)
        state = cocoa.init_state(task, part, w_init, blocks)
        for _ in range(rounds):
            state = cocoa.inner_iteration(state, task, part, config, blocks, pinvs)

        coordinator, nodes = spawn_network(task, part, w_init)
        for _ in range(rounds):
            run_round(coordinator, nodes)

        np.testing.assert_array_equal(network_solution(nodes), state.x)
        for node, share in zip(nodes, state.shares):
            np.testing.assert_array_equal(node.local_v, share)

    def test_node_order_does_not_matter(self):
        task, part = instance(14)
        w_init = rng_for(14).standard_normal(P)
        coordinator_a, nodes_a = spawn_network(task, part, w_init)
        coordinator_b, nodes_b = spawn_network(task, part, w_init)
        shuffled = [nodes_b[2], nodes_b[0], nodes_b[3], nodes_b[1]]
        for _ in range(2):
            run_round(coordinator_a, nodes_a)
            run_round(coordinator_b, shuffled)
        np.testing.assert_array_equal(network_solution(nodes_a),
                                      network_solution(nodes_b))
