import io
import tempfile
import unittest
from pathlib import Path
from typing import Any, Literal

from pydantic import ConfigDict, ValidationError
from pydantic_yaml import parse_yaml_raw_as
from rich.console import Console

from radarmat import ConfigBase, Field, RadarConfig
from radarmat.knowledge_rag import ChunkSettings
from radarmat.scenarios import SimulatedObject


class Config(ConfigBase):
    class Endpoint(ConfigBase):
        model: str = "deepseek-r1:14b"
        timeout_s: float = 120.0

    endpoint: Endpoint = Endpoint()
    seed: int | None = 0
    modes: list[str] = ["rule-based"]
    mode: Literal["llm+rag", "llm-only", "rule-based"] = "rule-based"
    export_maps: bool = False
    extra_headers: dict[str, Any] = {}


class Constrained(ConfigBase):
    model_config = ConfigDict(revalidate_instances="always")
    n_chirps: int = Field(128, gt=0)
    gamma_f: float = Field(0.5, ge=0.0, le=1.0)


def quiet_console() -> Console:
    return Console(file=io.StringIO(), width=120)


class TestArgParse(unittest.TestCase):
    def test_scalars_and_lists(self):
        config = Config.parse_args(args=["--seed", "3"])
        self.assertEqual(config.seed, 3)

        config = Config.parse_args(args=["--modes", "llm+rag", "llm-only"])
        self.assertEqual(config.modes, ["llm+rag", "llm-only"])

    def test_nested(self):
        config = Config.parse_args(
            args=["--endpoint.model", "llama3", "--endpoint.timeout-s", "30"]
        )
        self.assertEqual(config.endpoint.model, "llama3")
        self.assertEqual(config.endpoint.timeout_s, 30.0)

    def test_underscore_to_hyphen(self):
        config = Config.parse_args(args=["--export-maps"])
        self.assertTrue(config.export_maps)
        config = Config.parse_args(args=["--no-export-maps"])
        self.assertFalse(config.export_maps)

    def test_keep_underscore(self):
        config = Config.parse_args(
            replace_underscore_to_hyphen=False, args=["--export_maps"]
        )
        self.assertTrue(config.export_maps)

    def test_literal_choices(self):
        config = Config.parse_args(args=["--mode", "llm-only"])
        self.assertEqual(config.mode, "llm-only")
        with self.assertRaises(SystemExit) as ctx:
            Config.parse_args(args=["--mode", "oracle"], console=quiet_console())
        self.assertEqual(ctx.exception.code, 1)

    def test_parse_dict(self):
        config = Config.parse_args(args=["--extra-headers", "{x-trace: on}"])
        self.assertEqual(config.extra_headers.get("x-trace"), "on")

    def test_help_exits_zero(self):
        with self.assertRaises(SystemExit) as ctx:
            Config.parse_args(args=["--help"])
        self.assertEqual(ctx.exception.code, 0)

    def test_validation_failure_exits_one(self):
        console = quiet_console()
        with self.assertRaises(SystemExit) as ctx:
            RadarConfig.parse_args(args=["--n-chirps", "0"], console=console)
        self.assertEqual(ctx.exception.code, 1)
        self.assertIn("n_chirps", console.file.getvalue())

    def test_diff_to_default(self):
        console = quiet_console()
        Config.parse_args(
            args=["--seed", "9", "--endpoint.model", "llama3"],
            diff_print_mode="tree_skip",
            console=console,
        )
        text = console.file.getvalue()
        self.assertIn("seed", text)
        self.assertIn("current: 9", text)
        self.assertIn("current: 'llama3'", text)
        self.assertNotIn("timeout_s", text)

    def test_nested_chunk_settings(self):
        class Args(ConfigBase):
            chunk: ChunkSettings = ChunkSettings()

        args = Args.parse_args(args=["--chunk.chunk-size", "256", "--chunk.overlap", "32"])
        self.assertEqual(args.chunk.chunk_size, 256)
        self.assertEqual(args.chunk.overlap, 32)


class TestConstraints(unittest.TestCase):
    def test_int_float(self):
        with self.assertRaises(ValidationError):
            parse_yaml_raw_as(Constrained, "n_chirps: 1.5")

    def test_bounds(self):
        with self.assertRaises(ValidationError):
            parse_yaml_raw_as(Constrained, "n_chirps: -1")
        with self.assertRaises(ValidationError):
            parse_yaml_raw_as(Constrained, "gamma_f: 1.1")
        self.assertEqual(parse_yaml_raw_as(Constrained, "gamma_f: 1.0").gamma_f, 1.0)
        self.assertEqual(parse_yaml_raw_as(Constrained, "gamma_f: 0.0").gamma_f, 0.0)

    def test_extra_fields_forbidden(self):
        with self.assertRaises(ValidationError):
            parse_yaml_raw_as(Constrained, "n_frames: 2")

    def test_radar_sweep_consistency(self):
        with self.assertRaises(ValidationError):
            RadarConfig(bandwidth_B=4.5e9)
        RadarConfig(n_samples=300, bandwidth_B=1.98e9)


class TestMutuallyExclusiveSets(unittest.TestCase):
    def test_permittivity_or_perfect_reflector(self):
        with self.assertRaises(ValidationError):
            SimulatedObject(
                label="mug", material="metal", range=1.0, epsilon_r=4.0, perfect_reflector=True
            )
        with self.assertRaises(ValidationError):
            SimulatedObject(label="mug", material="metal", range=1.0)

        obj = SimulatedObject(label="mug", material="metal", range=1.0, perfect_reflector=True)
        self.assertTrue(obj.perfect_reflector)
        self.assertIsNone(obj.epsilon_r)


class TestPersistence(unittest.TestCase):
    def test_mapping_interface(self):
        config = RadarConfig()
        self.assertEqual(config["n_chirps"], 128)
        self.assertEqual(len(config), len(RadarConfig.model_fields))
        with self.assertRaises(KeyError):
            config["n_frames"]

    def test_flatten(self):
        flat = Config().flatten()
        self.assertEqual(flat["endpoint.timeout_s"], 120.0)
        self.assertNotIn("endpoint", flat)

    def test_yaml_and_record(self):
        config = RadarConfig(n_chirps=64, n_channels=4)
        with tempfile.TemporaryDirectory() as tmp:
            yaml_path = Path(tmp) / "radar.yaml"
            config.save_as_yaml(yaml_path)
            self.assertEqual(RadarConfig.load(yaml_path), config)

            record_path = Path(tmp) / "radar.cfg"
            config.save_as_record(record_path)
            self.assertIn("n_chirps = 64", record_path.read_text())
            self.assertEqual(RadarConfig.load(record_path), config)

    def test_nested_record(self):
        restored = Config.from_record(
            {"endpoint.model": "llama3", "endpoint.timeout_s": "5", "seed": "7"}
        )
        self.assertEqual(restored.endpoint.model, "llama3")
        self.assertEqual(restored.endpoint.timeout_s, 5.0)
        self.assertEqual(restored.seed, 7)


if __name__ == "__main__":
    unittest.main()
