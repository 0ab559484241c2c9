import unittest
import sys
import os
import itertools

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ddtwa.core.noise import (
    OUState,
    cavity_loss_increment,
    colored_dephasing_drift,
    decay_increment,
    decay_increment_improved,
    decay_increment_qle,
    dephasing_increment,
    dephasing_length_drift,
    expected_length_change,
    ou_initialize,
    ou_step,
)


def exact_length_change(increment, s, dt, n_noises):
    """在 ±√dt 的全部组合上取平均，得到 E[d(s²)] 的精确值 (二点分布与高斯有相同的前两阶矩)"""
    s = np.asarray(s, dtype=np.float64)
    changes = []
    for signs in itertools.product((1.0, -1.0), repeat=n_noises):
        dW = [sign * np.sqrt(dt) for sign in signs]
        ds = increment(s, dt, *dW)
        changes.append(np.sum((s + ds) ** 2) - np.sum(s ** 2))
    return float(np.mean(changes))


class TestDephasing(unittest.TestCase):
    def test_deterministic_part(self):
        ds = dephasing_increment(np.array([1.0, 0.0, 0.0]), 0.4, 0.01, 0.0)
        np.testing.assert_allclose(ds, [-0.004, 0.0, 0.0])

    def test_zero_rate(self):
        ds = dephasing_increment(np.array([0.3, -0.2, 1.0]), 0.0, 0.01, 0.7)
        np.testing.assert_array_equal(ds, 0.0)

    def test_length_conserved_in_expectation(self):
        s = [0.5, -1.2, 0.3]
        dt = 1e-4
        change = exact_length_change(lambda s, dt, dW: dephasing_increment(s, 0.8, dt, dW), s, dt, 1)
        self.assertAlmostEqual(change, expected_length_change(np.array(s), "dephasing", 0.8, dt), delta=1e-7)

    def test_discrete_step_length_drift(self):
        s = np.array([0.5, -1.2, 0.3])
        dt = 0.05
        change = exact_length_change(lambda s, dt, dW: dephasing_increment(s, 0.8, dt, dW), s, dt, 1)
        self.assertAlmostEqual(change, (0.5 ** 2 + 1.2 ** 2) * (0.8 * dt) ** 2, places=12)

    def test_accumulated_length_drift(self):
        self.assertAlmostEqual(dephasing_length_drift(1.0, 0.005, 5.0), 0.02532, places=4)
        self.assertAlmostEqual(dephasing_length_drift(1.0, 1e-4, 5.0), 5e-4, delta=1e-6)
        self.assertEqual(dephasing_length_drift(0.0, 0.01, 5.0), 0.0)
        with self.assertRaises(ValueError):
            dephasing_length_drift(1.0, 0.0, 5.0)

        rng = np.random.default_rng(11)
        s = np.tile([1.0, 1.0, -1.0], (40000, 1))
        dt = 0.1
        for _ in range(20):
            s = s + dephasing_increment(s, 1.0, dt, rng.normal(0.0, np.sqrt(dt), 40000))
        growth = np.mean(s[:, 0] ** 2 + s[:, 1] ** 2) / 2.0 - 1.0
        self.assertAlmostEqual(growth, dephasing_length_drift(1.0, dt, 2.0), delta=0.05)


class TestColoredNoise(unittest.TestCase):
    def test_rotation_drift(self):
        np.testing.assert_allclose(colored_dephasing_drift(np.array([1.0, 0.0, 0.0]), 0.3), [0.0, 0.3, 0.0])
        np.testing.assert_allclose(colored_dephasing_drift(np.array([0.0, 0.0, -1.0]), 2.0), 0.0)

    def test_zero_sigma_stays_zero(self):
        state = ou_initialize(0.0, np.ones((4, 3)))
        for _ in range(10):
            state = ou_step(state, 0.5, 0.0, 0.01, np.full((4, 3), 0.1))
        np.testing.assert_array_equal(state.xi, 0.0)

    def test_stationary_variance_and_autocorrelation(self):
        generator = np.random.default_rng(11)
        sigma, tau_c, dt = 1.3, 0.5, 0.01
        state = ou_initialize(sigma, generator.standard_normal(20000))
        start = state.xi.copy()
        lag = 50
        for _ in range(lag):
            state = ou_step(state, tau_c, sigma, dt, generator.standard_normal(20000) * np.sqrt(dt))
        self.assertAlmostEqual(state.xi.var() / sigma ** 2, 1.0, delta=0.05)
        correlation = np.mean(start * state.xi) / sigma ** 2
        self.assertAlmostEqual(correlation, np.exp(-lag * dt / tau_c), delta=0.04)

    def test_invalid_tau(self):
        with self.assertRaises(ValueError):
            ou_step(OUState(np.zeros(2)), 0.0, 1.0, 0.01, np.zeros(2))


class TestDecay(unittest.TestCase):
    def test_dark_state_fixed_point(self):
        s = np.array([0.0, 0.0, -1.0])
        np.testing.assert_allclose(decay_increment(s, 1.0, 0.01, 0.37), 0.0, atol=1e-15)

    def test_improved_shares_deterministic_part(self):
        s = np.array([0.4, -0.9, 0.6])
        np.testing.assert_allclose(
            decay_increment_improved(s, 0.7, 0.01, 0.0, 0.0), decay_increment(s, 0.7, 0.01, 0.0)
        )

    def test_improved_at_ground_state(self):
        s = np.array([0.0, 0.0, -1.0])
        gamma = 2.0
        ds = decay_increment_improved(s, gamma, 0.01, 1.0, 0.0)
        np.testing.assert_allclose(ds, [-np.sqrt(gamma) / 2, np.sqrt(gamma) / 2, 0.0])
        dt = 1e-3
        change = exact_length_change(
            lambda s, dt, a, b: decay_increment_improved(s, gamma, dt, a, b), s, dt, 2
        )
        self.assertAlmostEqual(change, gamma * dt, delta=1e-9)

    def test_length_change_formulas(self):
        s = np.array([0.5, -1.2, 0.3])
        gamma, dt = 0.9, 1e-5
        cases = [
            ("decay_standard", lambda s, dt, a: decay_increment(s, gamma, dt, a), 1),
            ("decay_improved", lambda s, dt, a, b: decay_increment_improved(s, gamma, dt, a, b), 2),
            ("decay_qle", lambda s, dt, a, b: decay_increment_qle(s, gamma, dt, a, b), 2),
        ]
        for kind, increment, n_noises in cases:
            with self.subTest(kind=kind):
                expected = expected_length_change(s, kind, gamma, dt)
                change = exact_length_change(increment, s, dt, n_noises)
                self.assertAlmostEqual(change, expected, delta=1e-3 * abs(expected))

    def test_qle_grows_in_lower_hemisphere(self):
        s = np.array([0.2, 0.1, -0.8])
        self.assertGreater(expected_length_change(s, "decay_qle", 1.0, 0.01), 0.0)

    def test_unknown_kind(self):
        with self.assertRaises(ValueError):
            expected_length_change(np.zeros(3), "nonsense", 1.0, 0.01)


class TestCavityLoss(unittest.TestCase):
    def test_zero_kappa(self):
        self.assertEqual(cavity_loss_increment(np.array([1.0 + 2.0j]), 0.0, 0.01, 0.5, -0.5)[0], 0.0)

    def test_deterministic_damping(self):
        d_alpha = cavity_loss_increment(np.array([2.0 - 1.0j]), 0.5, 0.01, 0.0, 0.0)
        np.testing.assert_allclose(d_alpha, [-0.005 * (2.0 - 1.0j)])

    def test_stationary_quadrature_variance(self):
        generator = np.random.default_rng(2)
        kappa, dt = 1.0, 0.01
        alpha = np.zeros(20000, dtype=np.complex128)
        for _ in range(800):
            dW = generator.standard_normal((2, alpha.size)) * np.sqrt(dt)
            alpha = alpha + cavity_loss_increment(alpha, kappa, dt, dW[0], dW[1])
        self.assertAlmostEqual(alpha.real.var(), 0.25, delta=0.015)
        self.assertAlmostEqual(alpha.imag.var(), 0.25, delta=0.015)
        self.assertAlmostEqual((np.abs(alpha) ** 2).mean() - 0.5, 0.0, delta=0.02)


if __name__ == '__main__':
    unittest.main()
