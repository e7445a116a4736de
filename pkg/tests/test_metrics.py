import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocoasim.metrics import (
    distance_to_generator,
    forgetting,
    offline_oracle,
    relative_last_step,
    task_loss,
    unique_forgetting,
    weighted_forgetting,
)
from cocoasim.tasks import (
    Task,
    TaskSchedule,
    build_sequence,
    gen_gaussian_task,
    shared_generator,
    stack_offline,
)


def rng_for(seed):
    return np.random.default_rng(np.random.SeedSequence((41, seed)))


class TestTaskLoss:
    def test_generator_has_zero_loss(self):
        task = gen_gaussian_task(1, 4, 9, np.ones(9), master_seed=0)
        assert task_loss(task, np.ones(9)) <= 1e-20

    def test_zero_vector_loss(self):
        task = gen_gaussian_task(1, 4, 9, np.ones(9), master_seed=1)
        expected = float(task.targets @ task.targets) / 4
        assert task_loss(task, np.zeros(9)) == pytest.approx(expected, rel=1e-15)

    def test_hand_computed(self):
        task = Task(id=1, features=np.eye(2), targets=np.array([1.0, 2.0]))
        assert task_loss(task, np.zeros(2)) == pytest.approx(2.5, rel=0, abs=0)

    def test_rejects_bad_shape(self):
        task = Task(id=1, features=np.eye(2), targets=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            task_loss(task, np.zeros(3))


class TestForgetting:
    def make_family(self, seed=2):
        spec = shared_generator(8)
        schedule = TaskSchedule("cyclic", 3, repeats=4)
        return build_sequence(schedule, spec, 2, 8, seed)

    def test_zero_when_all_tasks_solved(self):
        tasks, sequence = self.make_family()
        assert forgetting(tasks, sequence, np.ones(8), len(sequence)) <= 1e-20

    def test_first_step_is_first_task_loss(self):
        tasks, sequence = self.make_family()
        w = rng_for(3).standard_normal(8)
        assert forgetting(tasks, sequence, w, 1) == pytest.approx(
            task_loss(tasks[0], w), rel=1e-15)

    def test_matches_literal_presentation_mean(self):
        tasks, sequence = self.make_family()
        w = rng_for(4).standard_normal(8)
        for t in (1, 2, 5, 7, len(sequence)):
            literal = sum(task_loss(tasks[m - 1], w) for m in sequence[:t]) / t
            assert forgetting(tasks, sequence, w, t) == pytest.approx(literal, rel=1e-12)

    def test_t_range_checked(self):
        tasks, sequence = self.make_family()
        with pytest.raises(ValueError):
            forgetting(tasks, sequence, np.ones(8), 0)
        with pytest.raises(ValueError):
            forgetting(tasks, sequence, np.ones(8), len(sequence) + 1)

    def test_weighted_and_unique_agree_on_full_cycles(self):
        tasks, sequence = self.make_family()
        w = rng_for(5).standard_normal(8)
        losses = [task_loss(task, w) for task in tasks]
        counts = [4, 4, 4]
        assert weighted_forgetting(losses, counts) == pytest.approx(
            unique_forgetting(losses, counts), rel=1e-12)


class TestRelativeLastStep:
    def test_no_step(self):
        w = rng_for(6).standard_normal(5)
        assert relative_last_step(w, w) == 0.0

    def test_from_zero(self):
        w = rng_for(7).standard_normal(5)
        assert relative_last_step(w, np.zeros(5)) == pytest.approx(1.0, rel=1e-15)

    def test_hand_computed(self):
        assert relative_last_step(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == 0.25

    def test_zero_current_is_infinite(self):
        assert math.isinf(relative_last_step(np.zeros(3), np.ones(3)))


class TestDistance:
    def test_identical(self):
        w = rng_for(8).standard_normal(4)
        assert distance_to_generator(w, w) == 0.0

    def test_all_ones_norm(self):
        assert distance_to_generator(np.zeros(160), np.ones(160)) == pytest.approx(
            math.sqrt(160), rel=1e-15)

    def test_symmetric_nonnegative(self):
        a = rng_for(9).standard_normal(6)
        b = rng_for(10).standard_normal(6)
        assert distance_to_generator(a, b) == distance_to_generator(b, a) >= 0.0


class TestOfflineOracle:
    def test_square_invertible_task(self):
        rng = rng_for(11)
        a = rng.standard_normal((5, 5))
        x_true = rng.standard_normal(5)
        task = Task(id=1, features=a, targets=a @ x_true)
        np.testing.assert_allclose(offline_oracle([task]), x_true, rtol=1e-9)

    def test_tall_stack_recovers_generator(self):
        spec = shared_generator(8)
        tasks, _ = build_sequence(TaskSchedule("one_shot", 4), spec, 4, 8, 12)
        np.testing.assert_allclose(offline_oracle(tasks), spec.w_star,
                                   rtol=0, atol=1e-8)

    def test_broad_stack_minimum_norm(self):
        spec = shared_generator(20)
        tasks, _ = build_sequence(TaskSchedule("one_shot", 2), spec, 3, 20, 13)
        solution = offline_oracle(tasks)
        features, targets = stack_offline(tasks)
        assert np.linalg.norm(features @ solution - targets) <= 1e-9
        assert np.linalg.norm(solution) <= np.linalg.norm(spec.w_star) + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6),
       scale=st.floats(min_value=0.1, max_value=10.0, allow_nan=False))
def test_loss_scales_quadratically(seed, scale):
    task = gen_gaussian_task(1, 3, 6, np.ones(6), master_seed=seed)
    w = np.random.default_rng(np.random.SeedSequence((42, seed))).standard_normal(6)
    scaled = Task(id=1, features=scale * task.features, targets=scale * task.targets)
    expected = scale * scale * task_loss(task, w)
    assert task_loss(scaled, w) == pytest.approx(expected, rel=1e-10)
