import contextlib
import io
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from radarmat import EMParameters, RadarConfig, records
from radarmat.capture import read_capture, read_matrix
from radarmat.cli import main
from radarmat.em_estimator import Calibration
from radarmat.knowledge_rag import KnowledgeIndex
from radarmat.scenarios import CALIBRATION_SPHERE, Scenario, SimulatedObject, packaged_scenario


GLASS_PARAMS = (
    "range_m = 1.0\nvelocity_mps = 0.0\nangle_deg = 0.0\nsnr_db = 30.0\nrcs_m2 = 0.001\n"
    "rho = 0.1\ngamma_f = 0.33\nepsilon_r = 4.0\nmetal_like_flag = false\n"
)


class TestCommandLine(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def run_cli(self, *argv: str) -> tuple[int, str]:
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            code = main([str(a) for a in argv])
        return code, out.getvalue()

    def glass_scenario(self) -> Path:
        glass = SimulatedObject(label="glass", material="glass", range=1.3, angle_deg=4.0, epsilon_r=4.0)
        path = self.dir / "glass.yaml"
        Scenario(targets=[glass.to_sim_target(RadarConfig())]).save_as_yaml(path)
        return path

    def test_command_list(self):
        self.assertEqual(self.run_cli()[0], 0)
        self.assertEqual(self.run_cli("--help")[0], 0)
        self.assertEqual(self.run_cli("simulate", "--help")[0], 0)

    def test_unknown_command(self):
        self.assertEqual(self.run_cli("transmogrify")[0], 2)

    def test_invalid_arguments(self):
        self.assertEqual(self.run_cli("simulate", "--out", self.dir / "x.bin")[0], 1)
        self.assertEqual(self.run_cli("report", "--out", self.dir / "r.txt", "--workers", "0")[0], 1)

    def test_missing_capture(self):
        code, _ = self.run_cli(
            "process", "--capture", self.dir / "absent.bin", "--calibration", self.dir / "cal.txt"
        )
        self.assertEqual(code, 2)

    def test_simulate_calibrate_process_identify(self):
        sphere_bin, glass_bin = self.dir / "sphere.bin", self.dir / "glass.bin"
        cal_path, params_path = self.dir / "cal.txt", self.dir / "params.txt"

        code, _ = self.run_cli(
            "simulate", "--scenario", packaged_scenario(CALIBRATION_SPHERE), "--out", sphere_bin
        )
        self.assertEqual(code, 0)
        self.assertEqual(read_capture(sphere_bin).config, RadarConfig())
        self.assertEqual(self.run_cli("simulate", "--scenario", self.glass_scenario(), "--out", glass_bin, "--seed", "1")[0], 0)

        code, output = self.run_cli("calibrate", "--capture", sphere_bin, "--out", cal_path)
        self.assertEqual(code, 0)
        self.assertIn("K =", output)
        self.assertGreater(Calibration.load(cal_path).K, 0)

        code, _ = self.run_cli(
            "process",
            "--capture", glass_bin,
            "--calibration", cal_path,
            "--out", params_path,
            "--export-maps", self.dir / "maps",
        )
        self.assertEqual(code, 0)
        params = EMParameters.from_record(records.read_record(params_path))
        self.assertAlmostEqual(params.epsilon_r, 4.0, delta=0.4)
        self.assertEqual(read_matrix(self.dir / "maps" / "rd_map.bin").shape, (600, 128))
        self.assertEqual(read_matrix(self.dir / "maps" / "ra_map.bin").shape, (600, 513))

        code, output = self.run_cli("identify", "--params", params_path, "--no-llm")
        self.assertEqual(code, 0)
        verdict = records.parse_record(output)
        self.assertEqual(verdict["canonical_class"], "glass")
        self.assertEqual(verdict["mode"], "rule-based")

        index_path = self.dir / "knowledge.rmki"
        self.assertEqual(self.run_cli("index", "--out", index_path, "--chunk.chunk-size", "256")[0], 0)
        self.assertGreater(len(KnowledgeIndex.load(index_path)), 0)

        verdict_path = self.dir / "verdict.txt"
        code, _ = self.run_cli(
            "identify",
            "--params", params_path,
            "--index", index_path,
            "--base-url", "stub://rule-table",
            "--out", verdict_path,
        )
        self.assertEqual(code, 0)
        verdict = records.read_record(verdict_path)
        self.assertEqual(verdict["canonical_class"], "glass")
        self.assertEqual(verdict["mode"], "llm+rag")
        self.assertTrue(verdict["sources"])

    def test_simulate_is_deterministic(self):
        scenario = packaged_scenario(CALIBRATION_SPHERE)
        first, second = self.dir / "a.bin", self.dir / "b.bin"
        self.assertEqual(self.run_cli("simulate", "--scenario", scenario, "--out", first, "--seed", "4")[0], 0)
        self.assertEqual(self.run_cli("simulate", "--scenario", scenario, "--out", second, "--seed", "4")[0], 0)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        verbose = self.dir / "c.bin"
        self.assertEqual(
            self.run_cli("simulate", "--scenario", scenario, "--out", verbose, "--seed", "4", "--verbose")[0], 0
        )
        self.assertEqual(verbose.read_bytes(), first.read_bytes())

    def test_simulate_rejects_aliased_target(self):
        scene = self.dir / "far.txt"
        scene.write_text("range = 40.0\nrcs = 0.01\n")
        self.assertEqual(self.run_cli("simulate", "--scenario", scene, "--out", self.dir / "far.bin")[0], 2)
        self.assertFalse((self.dir / "far.bin").exists())

    def test_noise_only_capture(self):
        scene, capture = self.dir / "empty.yaml", self.dir / "noise.bin"
        scene.write_text("targets: []\n")
        self.assertEqual(self.run_cli("simulate", "--scenario", scene, "--out", capture)[0], 0)

        self.assertEqual(self.run_cli("calibrate", "--capture", capture, "--out", self.dir / "c.txt")[0], 2)
        self.assertFalse((self.dir / "c.txt").exists())

        cal = self.dir / "cal.txt"
        Calibration(K=3.2e6).save_as_record(cal)
        self.assertEqual(self.run_cli("process", "--capture", capture, "--calibration", cal)[0], 2)

        self.dir.joinpath("empty.txt").write_text("")
        self.assertEqual(self.run_cli("simulate", "--scenario", self.dir / "empty.txt", "--out", capture)[0], 2)

    def test_identify_needs_index_for_retrieval(self):
        params_path = self.dir / "params.txt"
        params_path.write_text(GLASS_PARAMS)
        self.assertEqual(self.run_cli("identify", "--params", params_path)[0], 2)
        self.assertEqual(self.run_cli("identify", "--params", params_path, "--no-llm")[0], 0)

        code, output = self.run_cli(
            "identify", "--params", params_path, "--no-rag", "--base-url", "stub://rule-table"
        )
        self.assertEqual(code, 0)
        self.assertEqual(records.parse_record(output)["mode"], "llm-only")

    def test_index_with_http_embedder(self):
        response = mock.Mock(status_code=200, text="")
        response.json.return_value = {"data": [{"embedding": [3.0, 4.0]}]}
        index_path = self.dir / "http.rmki"
        with mock.patch("radarmat.knowledge_rag.requests.Session") as session_cls:
            session_cls.return_value.post.return_value = response
            code, _ = self.run_cli(
                "index",
                "--out", index_path,
                "--embed-model", "nomic",
                "--embed-dim", "2",
                "--base-url", "http://host/v1",
            )
        self.assertEqual(code, 0)
        self.assertEqual(KnowledgeIndex.load(index_path).embedder_id, "http:nomic:2")
        self.assertEqual(session_cls.return_value.post.call_args.args[0], "http://host/v1/embeddings")

        # the default embedder cannot search an index built by another
        params_path = self.dir / "params.txt"
        params_path.write_text(GLASS_PARAMS)
        code, _ = self.run_cli(
            "identify", "--params", params_path, "--index", index_path, "--base-url", "stub://rule-table"
        )
        self.assertEqual(code, 2)

    def test_report(self):
        out = self.dir / "report.txt"
        code, output = self.run_cli("report", "--out", out, "--workers", "2")
        self.assertEqual(code, 0)
        self.assertIn("rule-based: 7/7 correct", output)
        self.assertTrue(out.with_suffix(".records").is_file())


if __name__ == "__main__":
    unittest.main()
