import json
import sys
import tempfile
import unittest
from pathlib import Path

from parameterized import parameterized

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.exceptions import ConfigLoadError, ConfigSaveError, ConfigValidationError
from bbmshape.models.config_manager import SUBCOMMAND_BLOCKS, ConfigManager, ExperimentConfig

COSINE_BLOCK = {"dim": 1, "offset": 1.0, "modes": [{"k": [1], "amp": 0.5, "phase": 0.0}]}


class ConfigTestCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, payload, name="experiment.json") -> Path:
        path = self.tmp / name
        path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
        return path


class TestLoad(ConfigTestCase):
    def test_defaults_without_file(self):
        manager = ConfigManager()
        self.assertEqual(manager.config, ConfigManager._default_schema())
        config = manager.experiment()
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.build_field().dim, 1)
        self.assertEqual(set(config.blocks), set(SUBCOMMAND_BLOCKS))

    def test_user_values_merge_over_defaults(self):
        path = self.write({"field": COSINE_BLOCK, "seed": 9, "halfspace": {"reps": 4000}})
        config = ConfigManager(path).experiment()
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.block("halfspace")["reps"], 4000)
        self.assertEqual(config.block("halfspace")["policy"], "conservative")
        self.assertEqual(len(config.build_field().modes), 1)

    def test_dashed_block_name(self):
        path = self.write({"verify_all": {"criteria": ["homogeneous"]}})
        self.assertEqual(ConfigManager(path).experiment().block("verify-all")["criteria"], ["homogeneous"])

    @parameterized.expand([(name.name,) for name in sorted((REPO_ROOT / "configs").glob("*.json"))])
    def test_shipped_configs_load(self, name):
        config = ConfigManager(REPO_ROOT / "configs" / name).experiment()
        self.assertGreater(config.build_field().mean, 0.0)

    def test_missing_file(self):
        with self.assertRaises(ConfigLoadError):
            ConfigManager(self.tmp / "absent.json")

    def test_invalid_json(self):
        with self.assertRaises(ConfigLoadError):
            ConfigManager(self.write("{seed: 1"))

    def test_top_level_must_be_object(self):
        with self.assertRaises(ConfigValidationError):
            ConfigManager(self.write([1, 2]))


class TestValidation(ConfigTestCase):
    @parameterized.expand(
        [
            ("top_level", {"sead": 1}),
            ("nested", {"halfspace": {"repz": 10}}),
            ("block_type", {"halfspace": 3}),
            ("field_key", {"field": {"dim": 1, "offset": 1.0, "modes": [], "period": 2}}),
            ("mode_key", {"field": {"dim": 1, "offset": 1.0, "modes": [{"k": [1], "amp": 0.5, "freq": 2}]}}),
            ("negative_field", {"field": {"dim": 1, "offset": 0.2, "modes": [{"k": [1], "amp": 0.5}]}}),
            ("seed", {"seed": -1}),
            ("seed_bool", {"seed": True}),
            ("threads", {"threads": 0}),
            ("output_dir", {"output_dir": ""}),
            ("epsilon", {"halfspace": {"epsilon": 1.2}}),
            ("bbm_dt", {"simulate": {"dt": 0.02}}),
            ("tilted_dt", {"tilted": {"dt": 0.01}}),
            ("cap", {"simulate": {"cap": 10}}),
            ("integer", {"simulate": {"reps": 2.5}}),
            ("positive", {"shape": {"reps": 0}}),
            ("policy", {"halfspace": {"policy": "maybe"}}),
            ("times", {"shape": {"t_list": []}}),
            ("negative_time", {"halfspace": {"upper_t_list": [1.0, -2.0]}}),
            ("flag", {"dump": "yes"}),
            ("string", {"fkpp": {"init": 3}}),
        ]
    )
    def test_rejected(self, _, payload):
        with self.assertRaises(ConfigValidationError):
            ConfigManager(self.write(payload))

    def test_nullable_keys(self):
        path = self.write({"eigen": {"direction": [1.0]}, "halfspace": {"T0": 2.5}, "fkpp": {"dt": 0.001}})
        block = ConfigManager(path).experiment().block("halfspace")
        self.assertEqual(block["T0"], 2.5)


class TestOverridesAndSave(ConfigTestCase):
    def test_overrides_take_precedence(self):
        manager = ConfigManager(self.write({"seed": 3, "threads": 2}))
        manager.apply_overrides(seed=17, output_dir=str(self.tmp / "out"), threads=None, dump=True)
        config = manager.experiment()
        self.assertEqual(config.seed, 17)
        self.assertEqual(config.threads, 2)
        self.assertTrue(config.dump)
        self.assertEqual(config.output_dir, str(self.tmp / "out"))

    def test_override_is_validated(self):
        manager = ConfigManager()
        with self.assertRaises(ConfigValidationError):
            manager.apply_overrides(threads=0)

    def test_save_and_reload(self):
        manager = ConfigManager(self.write({"field": COSINE_BLOCK, "seed": 5}))
        target = manager.save(self.tmp / "nested" / "saved.json")
        self.assertTrue(target.read_text(encoding="utf-8").endswith("}\n"))
        self.assertEqual(ConfigManager(target).config, manager.config)

    def test_save_needs_path(self):
        with self.assertRaises(ConfigSaveError):
            ConfigManager().save()

    def test_experiment_round_trip(self):
        config = ConfigManager(self.write({"field": COSINE_BLOCK})).experiment()
        again = ExperimentConfig.from_dict(config.to_dict())
        self.assertEqual(again, config)


if __name__ == "__main__":
    unittest.main()
