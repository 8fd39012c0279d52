import json
import math
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape import __version__
from bbmshape.cli.artifacts import MANIFEST_NAME, RunRecord, library_versions, write_csv, write_json, write_table
from bbmshape.models.field import make_trig_field


class _Table:
    def columns(self):
        return ["t", "value"]

    def to_rows(self):
        return [[1.0, np.float64(0.1)], [2.0, None]]


class ArtifactTestCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()


class TestWriters(ArtifactTestCase):
    def test_csv_cells(self):
        path = write_csv(self.tmp / "sub" / "a.csv", ["a", "b", "c", "d"], [[0.1, np.int64(3), True, None]])
        data = path.read_bytes()
        self.assertNotIn(b"\r", data)
        self.assertEqual(data.decode("utf-8"), "a,b,c,d\n0.1,3,1,\n")

    def test_csv_floats_are_exact(self):
        value = 1.0 / 3.0
        path = write_csv(self.tmp / "b.csv", ["x"], [[value]])
        self.assertEqual(float(path.read_text(encoding="utf-8").splitlines()[1]), value)

    def test_table(self):
        path = write_table(self.tmp / "t.csv", _Table())
        self.assertEqual(path.read_text(encoding="utf-8").splitlines(), ["t,value", "1.0,0.1", "2.0,"])

    def test_json(self):
        payload = {"b": np.arange(3), "a": {"flag": np.bool_(True), "ray": math.inf, "n": np.int32(4)}}
        path = write_json(self.tmp / "p.json", payload)
        text = path.read_text(encoding="utf-8")
        self.assertLess(text.index('"a"'), text.index('"b"'))
        data = json.loads(text)
        self.assertEqual(data["b"], [0, 1, 2])
        self.assertEqual(data["a"], {"flag": True, "ray": "inf", "n": 4})

    def test_identical_payloads_identical_bytes(self):
        payload = {"x": [0.1, 0.2], "y": 1e-17}
        first = write_json(self.tmp / "1.json", payload).read_bytes()
        second = write_json(self.tmp / "2.json", dict(reversed(payload.items()))).read_bytes()
        self.assertEqual(first, second)

    def test_versions(self):
        versions = library_versions()
        self.assertEqual(versions["bbmshape"], __version__)
        self.assertEqual(set(versions), {"bbmshape", "numpy", "scipy", "numba", "python"})


class TestRunRecord(ArtifactTestCase):
    def test_manifest(self):
        field = make_trig_field(1, [((1,), 0.5)], 1.0)
        record = RunRecord("eigen", self.tmp, field, 11, {"seed": 11})
        record.csv("z.csv", ["a"], [[1]])
        record.table("a.csv", _Table())
        record.json("w.json", {"dim": 1})
        record.summary["c_star"] = 1.5
        manifest = json.loads(record.manifest(True).read_text(encoding="utf-8"))

        self.assertTrue((self.tmp / MANIFEST_NAME).exists())
        self.assertEqual(manifest["artifacts"], ["a.csv", "w.json", "z.csv"])
        self.assertEqual(manifest["field_hash"], field.field_hash)
        self.assertEqual(manifest["field"], field.to_dict())
        self.assertEqual(manifest["seed"], 11)
        self.assertTrue(manifest["passed"])
        self.assertEqual(manifest["summary"], {"c_star": 1.5})
        self.assertGreaterEqual(manifest["wall_time_seconds"], 0.0)

    def test_manifest_without_verdict(self):
        record = RunRecord("simulate", self.tmp, make_trig_field(1, [], 1.0), 0, {})
        manifest = json.loads(record.manifest().read_text(encoding="utf-8"))
        self.assertIsNone(manifest["passed"])
        self.assertEqual(manifest["artifacts"], [])


if __name__ == "__main__":
    unittest.main()
