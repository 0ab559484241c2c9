import unittest
import sys
import os

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ddtwa.core.hamiltonian import CavityCoupling, CouplingMatrix, LocalFields, ModelSpec, mean_field_drift
from ddtwa.core.integrator import (
    SimulationPlan,
    TimeGrid,
    TrajectorySpec,
    check_stability,
    default_time_step,
    effective_channels,
    euler_maruyama_step,
    initialize_ou,
    run_batch,
    run_trajectory,
)
from ddtwa.core.noise import (
    decay_increment,
    decay_increment_improved,
    decay_increment_qle,
    dephasing_increment,
    expected_length_change,
)
from ddtwa.core.observables import RawLayout
from ddtwa.core.rng import CounterRNG
from ddtwa.core.spins import ProductStateSpec, SpinEnsembleState, sample_initial_ensemble
from ddtwa.exceptions import TrajectoryDivergenceError
from ddtwa.models import CouplingAxis, NoiseChannelKind, NoiseChannelSpec


def make_plan(n=3, channels=None, grid=None, seed=42):
    model = ModelSpec(
        n_spins=n,
        fields=LocalFields.uniform(1.0, "x", n),
        couplings=[CouplingMatrix(axis=CouplingAxis.ZZ, n_spins=n, collective=0.5)],
    )
    return SimulationPlan(
        model=model,
        channels=channels if channels is not None else [
            NoiseChannelSpec(kind=NoiseChannelKind.DEPHASING_INDIVIDUAL, rate=0.3)
        ],
        grid=grid or TimeGrid(0.2, 0.01, 5),
        initial=ProductStateSpec.uniform(np.pi / 2, 0.0, n),
        rng=CounterRNG(seed),
        layout=RawLayout(n),
    )


class TestTimeGrid(unittest.TestCase):
    def test_output_points(self):
        grid = TimeGrid(1.0, 0.1, 3)
        self.assertEqual(grid.n_steps, 10)
        self.assertEqual(grid.output_steps.tolist(), [0, 3, 6, 9])
        self.assertEqual(grid.n_outputs, 4)
        np.testing.assert_allclose(grid.output_times, [0.0, 0.3, 0.6, 0.9])

    def test_partial_last_step_rounds_up(self):
        self.assertEqual(TimeGrid(1.05, 0.1).n_steps, 11)

    def test_window_start(self):
        self.assertEqual(TimeGrid(1.0, 0.1).window_start(0.25), 8)
        self.assertEqual(TimeGrid(1.0, 0.1).window_start(1.0), 0)

    def test_invalid_grid(self):
        with self.assertRaises(ValueError):
            TimeGrid(1.0, 0.0)
        with self.assertRaises(ValueError):
            TimeGrid(0.01, 0.1)
        with self.assertRaises(ValueError):
            TimeGrid(1.0, 0.1, 0)

    def test_trajectory_spec_validation(self):
        with self.assertRaises(ValueError):
            TrajectorySpec(n_t=0)
        with self.assertRaises(ValueError):
            TrajectorySpec(n_t=1, master_seed=-1)
        with self.assertRaises(ValueError):
            TrajectorySpec(n_t=1, worker_count=0)
        self.assertIsNone(TrajectorySpec(n_t=1).worker_count)


class TestStep(unittest.TestCase):
    def test_no_channels_is_explicit_euler(self):
        plan = make_plan(channels=[])
        state = sample_initial_ensemble(plan.initial, 3, plan.rng, np.arange(4))
        ds, _ = mean_field_drift(state, plan.model)
        new_state, _ = euler_maruyama_step(state, plan.model, [], 0.01, plan.rng, np.arange(4), 1)
        np.testing.assert_allclose(new_state.spins, state.spins + 0.01 * ds)
        self.assertAlmostEqual(new_state.time, 0.01)

    def test_precession_about_z_keeps_sz(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(2.0, "z", 1))
        rng = CounterRNG(1)
        state = sample_initial_ensemble(ProductStateSpec.uniform(np.pi, 0.0, 1), 1, rng, np.arange(8))
        initial_z = state.spins[..., 2].copy()
        for step in range(1, 50):
            state, _ = euler_maruyama_step(state, model, [], 0.01, rng, np.arange(8), step)
        np.testing.assert_array_equal(state.spins[..., 2], initial_z)

    def test_rows_independent_of_batch(self):
        plan = make_plan()
        batch = sample_initial_ensemble(plan.initial, 3, plan.rng, np.arange(5))
        single = sample_initial_ensemble(plan.initial, 3, plan.rng, np.array([3]))
        batch, _ = euler_maruyama_step(batch, plan.model, plan.channels, 0.01, plan.rng, np.arange(5), 1)
        single, _ = euler_maruyama_step(single, plan.model, plan.channels, 0.01, plan.rng, np.array([3]), 1)
        np.testing.assert_allclose(batch.spins[3], single.spins[0], rtol=0, atol=1e-13)

    def test_nonfinite_state_reports_trajectory(self):
        plan = make_plan()
        spins = np.ones((3, 3, 3))
        spins[1, 0, 0] = np.inf
        with self.assertRaises(TrajectoryDivergenceError) as context:
            euler_maruyama_step(SpinEnsembleState(spins), plan.model, plan.channels, 0.01, plan.rng,
                                np.array([10, 11, 12]), 4)
        self.assertEqual(context.exception.failed_trajectories, [11])
        self.assertEqual(context.exception.step, 4)

    def test_collective_colored_noise_has_one_process(self):
        channel = NoiseChannelSpec(kind=NoiseChannelKind.DEPHASING_COLORED, sigma=1.0, tau_c=0.5, collective=True)
        ou = initialize_ou([channel], CounterRNG(0), np.arange(6), 4)
        self.assertEqual(ou[0].xi.shape, (6, 1))


class TestChannelsAndStepSize(unittest.TestCase):
    def test_cavity_kappa_becomes_channel(self):
        model = ModelSpec(n_spins=2, fields=LocalFields.uniform(0.0, "x", 2),
                          cavity=CavityCoupling(g=1.0, n_spins=2, kappa=0.5))
        channels = effective_channels(model, [])
        self.assertEqual(channels[-1].kind, NoiseChannelKind.CAVITY_LOSS)
        self.assertEqual(channels[-1].rate, 0.5)

    def test_cavity_loss_without_cavity(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(0.0, "x", 1))
        with self.assertRaises(ValueError):
            effective_channels(model, [NoiseChannelSpec(kind=NoiseChannelKind.CAVITY_LOSS, rate=1.0)])

    def test_colored_markov_mix_warns(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(0.0, "x", 1))
        channels = [
            NoiseChannelSpec(kind=NoiseChannelKind.DEPHASING_COLORED, sigma=1.0, tau_c=1.0),
            NoiseChannelSpec(kind=NoiseChannelKind.DECAY_STANDARD, rate=1.0),
        ]
        with self.assertLogs("ddtwa.core.integrator", level="WARNING"):
            effective_channels(model, channels)

    def test_default_time_step(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(2.0, "x", 1))
        initial = ProductStateSpec.uniform(np.pi, 0.0, 1)
        rng = CounterRNG(0)
        self.assertAlmostEqual(default_time_step(model, [], initial, rng, 10.0, 0.01), 0.005)
        channels = [NoiseChannelSpec(kind=NoiseChannelKind.DECAY_STANDARD, rate=10.0)]
        self.assertAlmostEqual(default_time_step(model, channels, initial, rng, 10.0, 0.01), 0.001)
        idle = ModelSpec(n_spins=1, fields=LocalFields.uniform(0.0, "x", 1))
        self.assertAlmostEqual(default_time_step(idle, [], initial, rng, 10.0, 0.01), 0.1)

    def test_default_time_step_dephasing_length_bound(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(0.0, "x", 1))
        initial = ProductStateSpec.uniform(np.pi / 2, 0.0, 1)
        rng = CounterRNG(0)
        dephasing = [NoiseChannelSpec(kind=NoiseChannelKind.DEPHASING_INDIVIDUAL, rate=1.0)]
        self.assertAlmostEqual(default_time_step(model, dephasing, initial, rng, 5.0, 0.01), 0.01)
        self.assertAlmostEqual(default_time_step(model, dephasing, initial, rng, 5.0, 0.01, n_t=100, length_z=2.0), 0.01)
        self.assertAlmostEqual(
            default_time_step(model, dephasing, initial, rng, 5.0, 0.01, n_t=100000, length_z=2.0), 6.4e-5)
        both = dephasing + [NoiseChannelSpec(kind=NoiseChannelKind.DEPHASING_COLLECTIVE, rate=1.0)]
        self.assertAlmostEqual(
            default_time_step(model, both, initial, rng, 5.0, 0.01, n_t=100000, length_z=2.0), 1.6e-5)
        decay = [NoiseChannelSpec(kind=NoiseChannelKind.DECAY_STANDARD, rate=1.0)]
        self.assertAlmostEqual(default_time_step(model, decay, initial, rng, 5.0, 0.01, n_t=100000, length_z=2.0), 0.01)

    def test_stability_warning(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(1.0, "x", 1))
        self.assertTrue(check_stability(0.01, model, [], 0.1))
        with self.assertLogs("ddtwa.core.integrator", level="WARNING"):
            self.assertFalse(check_stability(0.5, model, [], 0.1))


class TestBatchRunner(unittest.TestCase):
    def test_record_count(self):
        plan = make_plan()
        accumulator = run_batch(range(4), plan)
        self.assertEqual(accumulator.count, 4)
        self.assertEqual(accumulator.sums.shape, (plan.grid.n_outputs, plan.layout.size))
        self.assertEqual(plan.grid.n_outputs, 5)

    def test_trajectory_is_deterministic(self):
        plan = make_plan()
        first = run_trajectory(7, plan)
        second = run_trajectory(7, plan)
        np.testing.assert_array_equal(first.sums, second.sums)
        np.testing.assert_array_equal(first.outer, second.outer)

    def test_initial_record_matches_sampling(self):
        plan = make_plan()
        accumulator = run_batch([0, 1], plan)
        state = sample_initial_ensemble(plan.initial, 3, plan.rng, [0, 1])
        np.testing.assert_allclose(accumulator.sums[0], plan.layout.raw(state).sum(axis=0))


class TestLengthChange(unittest.TestCase):
    """单步 E[d s²] 与解析表达式的统计比较"""

    DETERMINISTIC = {
        NoiseChannelKind.DEPHASING_INDIVIDUAL: ("dephasing", lambda s, rate, dt: dephasing_increment(s, rate, dt, 0.0)),
        NoiseChannelKind.DECAY_STANDARD: ("decay_standard", lambda s, rate, dt: decay_increment(s, rate, dt, 0.0)),
        NoiseChannelKind.DECAY_IMPROVED: (
            "decay_improved", lambda s, rate, dt: decay_increment_improved(s, rate, dt, 0.0, 0.0)),
        NoiseChannelKind.DECAY_QLE: ("decay_qle", lambda s, rate, dt: decay_increment_qle(s, rate, dt, 0.0, 0.0)),
    }

    def residuals(self, kind, rate, theta=1.0, dt=0.01, n=4, batch=20000):
        """每条轨迹的 Δ(Σ s²) 减去确定性部分的平方与解析期望; 期望为 0"""
        model = ModelSpec(
            n_spins=n,
            fields=LocalFields.uniform(0.5, "x", n),
            couplings=[CouplingMatrix(axis=CouplingAxis.ZZ, n_spins=n, collective=1.0 / n)],
        )
        rng = CounterRNG(5)
        indices = np.arange(batch)
        state = sample_initial_ensemble(ProductStateSpec.uniform(theta, 0.3, n), n, rng, indices)
        channels = [NoiseChannelSpec(kind=kind, rate=rate)]
        new_state, _ = euler_maruyama_step(state, model, channels, dt, rng, indices, 1)

        name, deterministic = self.DETERMINISTIC[kind]
        s = state.spins
        drift, _ = mean_field_drift(state, model)
        step = drift * dt + deterministic(s, rate, dt)
        change = np.sum(new_state.spins ** 2, axis=(1, 2)) - np.sum(s ** 2, axis=(1, 2))
        expected = np.sum(expected_length_change(s, name, rate, dt), axis=1)
        return change - np.sum(step ** 2, axis=(1, 2)) - expected, expected

    def assert_zero_mean(self, values, sigmas=4.0):
        stderr = values.std(ddof=1) / np.sqrt(len(values))
        self.assertLessEqual(abs(values.mean()), sigmas * stderr + 1e-15)

    def test_decay_weak_rate(self):
        residual, _ = self.residuals(NoiseChannelKind.DECAY_STANDARD, 0.025)
        self.assert_zero_mean(residual)

    def test_each_channel(self):
        for kind in self.DETERMINISTIC:
            with self.subTest(kind=kind.value):
                residual, _ = self.residuals(kind, 0.5)
                self.assert_zero_mean(residual)

    def test_qle_length_follows_sz(self):
        for theta, sign in ((2.4, 1.0), (0.7, -1.0)):
            with self.subTest(theta=theta):
                residual, expected = self.residuals(NoiseChannelKind.DECAY_QLE, 0.5, theta=theta)
                self.assert_zero_mean(residual)
                self.assertGreater(sign * np.mean(expected), 0.0)

    def test_precession_length_error_halves_with_dt(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(1.0, "z", 1))
        rng = CounterRNG(2)
        errors = []
        for dt in (0.01, 0.005):
            state = sample_initial_ensemble(ProductStateSpec.uniform(np.pi / 2, 0.0, 1), 1, rng, np.arange(4))
            for step in range(1, int(round(1.0 / dt)) + 1):
                state, _ = euler_maruyama_step(state, model, [], dt, rng, np.arange(4), step)
            errors.append(np.mean(np.sum(state.spins ** 2, axis=-1)) - 3.0)
        self.assertGreater(errors[0], 0.0)
        self.assertAlmostEqual(errors[1] / errors[0], 0.5, delta=0.02)


if __name__ == '__main__':
    unittest.main()
