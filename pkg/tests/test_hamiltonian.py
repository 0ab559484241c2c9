import unittest
import sys
import os

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ddtwa.core.hamiltonian import (
    CavityCoupling,
    CouplingMatrix,
    LatticeSpec,
    LocalFields,
    ModelSpec,
    build_model,
    build_power_law_couplings,
    collective_couplings,
    effective_fields,
    mean_field_drift,
    sample_disorder,
)
from ddtwa.core.rng import CounterRNG
from ddtwa.core.spins import SpinEnsembleState
from ddtwa.models import CouplingAxis, ModelConfig


def naive_drift(spins, fields, couplings):
    """逐对求和的参考实现 O(N²)"""
    b, n, _ = spins.shape
    out = np.zeros_like(spins)
    for t in range(b):
        for i in range(n):
            omega = fields[i].copy()
            for axis, matrix in couplings:
                for j in range(n):
                    if j != i:
                        omega[axis] += 2.0 * matrix[i, j] * spins[t, j, axis]
            out[t, i] = np.cross(omega, spins[t, i])
    return out


class TestLattice(unittest.TestCase):
    def test_cubic_lattice_positions(self):
        lattice = LatticeSpec.cubic([2, 3])
        self.assertEqual(lattice.n_sites, 6)
        np.testing.assert_array_equal(lattice.positions[:, 2], 0.0)
        self.assertEqual(lattice.positions[-1].tolist(), [1.0, 2.0, 0.0])

    def test_coincident_sites_rejected(self):
        with self.assertRaises(ValueError):
            LatticeSpec(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))


class TestPowerLawCouplings(unittest.TestCase):
    def test_all_to_all_is_collective(self):
        block = build_power_law_couplings(LatticeSpec.cubic([5]), J=2.0, alpha=0.0)
        self.assertTrue(block.is_collective)
        self.assertAlmostEqual(block.collective, 2.0 / 5)
        np.testing.assert_allclose(block.dense(), 0.4 * (np.ones((5, 5)) - np.eye(5)))

    def test_all_to_all_without_lattice(self):
        config = ModelConfig(n_spins=4, couplings=[{"axis": "xx", "J": -2.0, "alpha": 0.0}])
        block = build_model(config).couplings[0]
        reference = collective_couplings(4, -2.0, axis=CouplingAxis.XX)
        self.assertEqual(block.axis, CouplingAxis.XX)
        self.assertAlmostEqual(block.collective, -0.5)
        np.testing.assert_allclose(block.dense(), reference.dense())

    def test_all_to_all_cutoff_drops_everything(self):
        self.assertFalse(collective_couplings(4, 1.0, cutoff_ratio=1.5).is_collective)
        np.testing.assert_array_equal(collective_couplings(4, 1.0, cutoff_ratio=1.5).dense(), 0.0)
        lattice_block = build_power_law_couplings(LatticeSpec.cubic([4]), J=1.0, alpha=0.0, cutoff_ratio=1.5)
        np.testing.assert_array_equal(lattice_block.dense(), 0.0)

    def test_two_sites_at_distance_two(self):
        lattice = LatticeSpec(np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
        block = build_power_law_couplings(lattice, J=1.0, alpha=3.0, normalize_by_N=False)
        i, j, values = block.pairs()
        self.assertEqual((int(i[0]), int(j[0])), (0, 1))
        self.assertAlmostEqual(values[0], 1.0 / 8)

    def test_cutoff_drops_weak_pairs(self):
        lattice = LatticeSpec.cubic([6, 6, 6])
        block = build_power_law_couplings(lattice, J=1.0, alpha=3.0, normalize_by_N=False, cutoff_ratio=0.01)
        i, j, values = block.pairs()
        self.assertTrue(np.all(np.abs(values) >= 0.01))

        diff = lattice.positions[:, None, :] - lattice.positions[None, :, :]
        distance = np.linalg.norm(diff, axis=-1)
        upper = np.triu(np.ones_like(distance, dtype=bool), k=1)
        expected = int(np.sum(upper & (distance <= 100.0 ** (1.0 / 3.0))))
        self.assertEqual(block.n_pairs, expected)
        self.assertLess(block.n_pairs, 216 * 215 // 2)

    def test_negative_alpha_rejected(self):
        with self.assertRaises(ValueError):
            build_power_law_couplings(LatticeSpec.cubic([2]), J=1.0, alpha=-1.0)

    def test_mean_coupling_ordered_pairs(self):
        n = 4
        model = ModelSpec(
            n_spins=n,
            fields=LocalFields.uniform(0.0, "x", n),
            couplings=[CouplingMatrix(axis=CouplingAxis.ZZ, n_spins=n, collective=1.0 / n)],
        )
        self.assertAlmostEqual(model.mean_coupling(), (n - 1) / n)


class TestDisorder(unittest.TestCase):
    def test_zero_variance(self):
        np.testing.assert_array_equal(sample_disorder(0.0, 5, CounterRNG(0), [0, 1]), 0.0)

    def test_moments(self):
        omega = sample_disorder(0.5, 50, CounterRNG(3), np.arange(2000))
        self.assertLess(abs(omega.mean()), 0.01)
        self.assertAlmostEqual(omega.var(), 0.5, delta=0.015)

    def test_frozen_disorder_shared(self):
        config = ModelConfig(n_spins=3, disorder={"sigma2": 1.0, "frozen": True})
        model = build_model(config, CounterRNG(8))
        detunings = model.detunings(CounterRNG(8), [0, 5, 9])
        np.testing.assert_array_equal(detunings[0], detunings[2])
        np.testing.assert_array_equal(detunings[1], model.frozen_detunings)

    def test_annealed_disorder_per_trajectory(self):
        config = ModelConfig(n_spins=3, disorder={"sigma2": 1.0, "frozen": False})
        model = build_model(config, CounterRNG(8))
        detunings = model.detunings(CounterRNG(8), [0, 1])
        self.assertFalse(np.array_equal(detunings[0], detunings[1]))


class TestMeanFieldDrift(unittest.TestCase):
    def test_pure_precession(self):
        model = ModelSpec(n_spins=2, fields=LocalFields.uniform(1.5, "x", 2))
        spins = np.array([[[0.3, -1.0, 1.2], [1.0, 1.0, -1.0]]])
        ds, dalpha = mean_field_drift(SpinEnsembleState(spins), model)
        np.testing.assert_allclose(ds, np.cross([1.5, 0.0, 0.0], spins))
        self.assertIsNone(dalpha)

    def test_two_spin_zz(self):
        block = CouplingMatrix(axis=CouplingAxis.ZZ, n_spins=2, rows=[0], cols=[1], values=[0.7])
        model = ModelSpec(n_spins=2, fields=LocalFields.uniform(0.0, "x", 2), couplings=[block])
        spins = np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]])
        ds, _ = mean_field_drift(SpinEnsembleState(spins), model)
        np.testing.assert_allclose(ds[0, 0], [0.0, 2 * 0.7, 0.0])

    def test_dicke_drift(self):
        n, g = 4, 0.8
        model = ModelSpec(
            n_spins=n,
            fields=LocalFields.uniform(0.0, "x", n),
            cavity=CavityCoupling(g=g, n_spins=n),
        )
        spins = np.tile([0.0, 0.0, -1.0], (1, n, 1))
        ds, dalpha = mean_field_drift(SpinEnsembleState(spins, np.array([1.0 + 0j])), model)
        np.testing.assert_allclose(ds[0, :, 0], 0.0, atol=1e-15)
        np.testing.assert_allclose(ds[0, :, 1], 2 * g / np.sqrt(n))
        np.testing.assert_allclose(ds[0, :, 2], 0.0, atol=1e-15)
        self.assertAlmostEqual(abs(dalpha[0]), 0.0)

    def test_cavity_drive_along_x(self):
        model = ModelSpec(
            n_spins=1,
            fields=LocalFields.uniform(0.0, "x", 1),
            cavity=CavityCoupling(g=0.0, n_spins=1, drive=0.9),
        )
        state = SpinEnsembleState(np.array([[[0.0, 0.0, -1.0]]]), np.array([0j]))
        np.testing.assert_allclose(effective_fields(state, model)[0, 0], [0.9, 0.0, 0.0])

    def test_matches_naive_pair_sum(self):
        n = 6
        lattice = LatticeSpec.cubic([n])
        zz = build_power_law_couplings(lattice, J=1.3, alpha=1.5, normalize_by_N=False)
        xx = CouplingMatrix(axis=CouplingAxis.XX, n_spins=n, collective=-0.4)
        detunings = np.linspace(-0.5, 0.5, n)
        fields = LocalFields.uniform(0.7, "y", n, detunings)
        model = ModelSpec(n_spins=n, fields=fields, couplings=[zz, xx], lattice=lattice)

        spins = np.random.default_rng(4).normal(size=(3, n, 3))
        ds, _ = mean_field_drift(SpinEnsembleState(spins), model)
        expected = naive_drift(spins, fields.vectors, [(2, zz.dense()), (0, xx.dense())])
        np.testing.assert_allclose(ds, expected, rtol=1e-12, atol=1e-12)

    def test_missing_cavity_amplitude(self):
        model = ModelSpec(n_spins=1, fields=LocalFields.uniform(0.0, "x", 1), cavity=CavityCoupling(g=1.0, n_spins=1))
        with self.assertRaises(ValueError):
            mean_field_drift(SpinEnsembleState(np.zeros((1, 1, 3))), model)


class TestModelHash(unittest.TestCase):
    def test_hash_is_stable_and_sensitive(self):
        config = ModelConfig(n_spins=4, couplings=[{"axis": "zz", "J": 1.0}])
        first = build_model(config).model_hash()
        self.assertEqual(first, build_model(config).model_hash())
        other = ModelConfig(n_spins=4, couplings=[{"axis": "zz", "J": 2.0}])
        self.assertNotEqual(first, build_model(other).model_hash())
        self.assertEqual(len(first), 16)


if __name__ == '__main__':
    unittest.main()
