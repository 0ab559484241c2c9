import unittest
import sys
import os
import copy
import json
import tempfile

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ddtwa.exceptions import ConfigError
from ddtwa.services.scenario_service import ScenarioService, apply_override, parse_override

TINY_SCENARIO = {
    "schema_version": 1,
    "name": "tiny",
    "model": {"n_spins": 2, "fields": {"Omega": 1.0, "axis": "x"}},
    "noise": [{"kind": "dephasing_individual", "rate": 0.2}],
    "initial_state": {"theta": 1.5707963267948966, "phi": 0.0},
    "run": {"t_end": 0.1, "n_t": 8, "seed": 3},
    "observables": {"squeezing": False},
}


class TestOverrides(unittest.TestCase):
    """测试 --set 覆盖项"""

    def test_parse_json_literal(self):
        self.assertEqual(parse_override("run.n_t=500"), (["run", "n_t"], 500))
        self.assertEqual(parse_override("model.disorder.frozen=true"), (["model", "disorder", "frozen"], True))

    def test_parse_falls_back_to_string(self):
        self.assertEqual(parse_override("name=my run"), (["name"], "my run"))

    def test_parse_requires_equals(self):
        with self.assertRaises(ConfigError):
            parse_override("run.n_t")

    def test_apply_into_list(self):
        document = copy.deepcopy(TINY_SCENARIO)
        apply_override(document, ["noise", "0", "rate"], 0.7)
        self.assertEqual(document["noise"][0]["rate"], 0.7)

    def test_apply_creates_missing_levels(self):
        document = copy.deepcopy(TINY_SCENARIO)
        apply_override(document, ["model", "disorder", "sigma2"], 0.5)
        self.assertEqual(document["model"]["disorder"], {"sigma2": 0.5})

    def test_apply_bad_index(self):
        document = copy.deepcopy(TINY_SCENARIO)
        with self.assertRaises(ConfigError):
            apply_override(document, ["noise", "5", "rate"], 0.7)


class TestScenarioService(unittest.TestCase):
    """测试场景服务"""

    def setUp(self):
        ScenarioService._instance = None
        self.service = ScenarioService()
        self.service.initialize()

    def write_scenario(self, document):
        handle = tempfile.NamedTemporaryFile("w", suffix=".json", delete=False, encoding="utf-8")
        with handle:
            json.dump(document, handle)
        self.addCleanup(os.remove, handle.name)
        return handle.name

    def test_unknown_key_reported(self):
        document = copy.deepcopy(TINY_SCENARIO)
        document["model"]["foo"] = 1
        with self.assertRaises(ConfigError) as context:
            self.service.validate(document)
        self.assertIn("model.foo", context.exception.offending_keys)

    def test_schema_version_mismatch(self):
        document = copy.deepcopy(TINY_SCENARIO)
        document["schema_version"] = 99
        with self.assertRaises(ConfigError) as context:
            self.service.validate(document)
        self.assertEqual(context.exception.offending_keys, ["schema_version"])

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            self.service.load_config("/nonexistent/scenario.json")

    def test_load_with_overrides(self):
        path = self.write_scenario(TINY_SCENARIO)
        config = self.service.load_config(path, ["run.n_t=4", "noise.0.rate=0.5"])
        self.assertEqual(config.run.n_t, 4)
        self.assertEqual(config.noise[0].rate, 0.5)

    def test_run_records_resolved_step(self):
        config = self.service.validate(copy.deepcopy(TINY_SCENARIO))
        series, metadata = self.service.run(config)
        self.assertEqual(metadata.command, "run")
        self.assertAlmostEqual(metadata.dt, 0.01)
        self.assertEqual(metadata.scenario["run"]["dt"], metadata.dt)
        self.assertEqual(metadata.n_t, 8)
        self.assertEqual(metadata.failure_count, 0)
        self.assertEqual(len(series.times), 11)
        self.assertNotIn("xi2", series.columns)
        self.assertIsNotNone(metadata.spin_length.initial)

    def test_oracle_and_mean_field(self):
        config = self.service.validate(copy.deepcopy(TINY_SCENARIO))
        _, exact = self.service.oracle(config)
        _, mean_field = self.service.oracle(config, mean_field=True)
        self.assertEqual(exact.command, "oracle")
        self.assertEqual(mean_field.command, "mean_field")

    def test_oracle_rejects_colored_noise(self):
        document = copy.deepcopy(TINY_SCENARIO)
        document["noise"] = [{"kind": "dephasing_colored", "sigma": 1.0, "tau_c": 1.0}]
        config = self.service.validate(document)
        with self.assertRaises(ConfigError):
            self.service.oracle(config)

    def test_sweep_records_failures(self):
        config = self.service.validate(copy.deepcopy(TINY_SCENARIO))
        frame, report = self.service.sweep(config, "run.dt", [0.01, -1.0], command="mean_field")
        self.assertEqual(len(frame), 1)
        self.assertEqual(frame["run.dt"].tolist(), [0.01])
        self.assertIn("Sx_mean", frame.columns)
        self.assertEqual(len(report.failures), 1)
        self.assertEqual(report.failures[0].value, -1.0)

    def test_sweep_without_values(self):
        config = self.service.validate(copy.deepcopy(TINY_SCENARIO))
        frame, report = self.service.sweep(config, "noise.0.rate", [])
        self.assertEqual(list(frame.columns), ["noise.0.rate"])
        self.assertEqual(len(frame), 0)
        self.assertEqual(report.failures, [])


if __name__ == '__main__':
    unittest.main()
