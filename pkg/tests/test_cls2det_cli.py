import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from cls2det import cls2det_cli
from cls2det.cls2det_cli import EXIT_CHECK_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from cls2det.errors import NumericalError, ShapeError
from cls2det.synthdata.dataset_io import META_FILE, TRAIN_CROPS_FILE, TRAIN_FILE, VAL_FILE

GEN_ARGS = ["--num-train", "3", "--num-val", "2", "--image-size", "32", "--classes", "3",
            "--crop-size", "16", "--parallel", "1", "--seed", "5", "-q"]


def run(argv):
    with contextlib.redirect_stdout(io.StringIO()):
        return main(argv)


class TestCli(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def gen(self, name="data"):
        out = self.tmp / name
        self.assertEqual(run(["gen-data", "--out", str(out)] + GEN_ARGS), EXIT_OK)
        return out

    def test_on_off(self):
        self.assertTrue(cls2det_cli.on_off("ON"))
        self.assertFalse(cls2det_cli.on_off("off"))
        self.assertEqual(cls2det_cli.pool_size("4"), (4, 4))
        self.assertEqual(cls2det_cli.pool_size("4x2"), (4, 2))

    def test_gen_data_writes_files_deterministically(self):
        a, b = self.gen("a"), self.gen("b")
        for name in (TRAIN_FILE, VAL_FILE, TRAIN_CROPS_FILE):
            with self.subTest(name=name):
                self.assertEqual((a / name).read_bytes(), (b / name).read_bytes())
        meta = json.loads((a / META_FILE).read_text())
        self.assertEqual(meta["crop_size"], 16)

    def test_bad_class_count_is_usage_error(self):
        argv = ["gen-data", "--out", str(self.tmp / "x"), "--classes", "1", "-q"]
        self.assertEqual(run(argv), EXIT_USAGE)

    def test_unknown_flag_is_usage_error(self):
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(run(["gen-data", "--out", str(self.tmp), "--bogus"]), EXIT_USAGE)

    def test_missing_dataset_is_io_error(self):
        argv = ["train-teacher", "--data", str(self.tmp / "missing"), "--out", str(self.tmp / "t"), "-q"]
        self.assertEqual(run(argv), EXIT_IO)

    def test_kd_cls_without_teacher_is_usage_error(self):
        data = self.gen()
        argv = ["train-student", "--data", str(data), "--out", str(self.tmp / "s"), "--kd-cls", "on", "-q"]
        self.assertEqual(run(argv), EXIT_USAGE)

    def test_unknown_config_key_is_usage_error(self):
        data = self.gen()
        cfg = self.tmp / "run.json"
        cfg.write_text(json.dumps({"lamda_kc": 0.4}))
        argv = ["train-student", "--data", str(data), "--out", str(self.tmp / "s"), "--config", str(cfg), "-q"]
        self.assertEqual(run(argv), EXIT_USAGE)

    def test_student_train_then_eval(self):
        data = self.gen()
        cfg = self.tmp / "run.json"
        cfg.write_text(json.dumps({"epochs": 1, "batch_size": 2, "channels": [4, 4, 4],
                                   "anchor_scales": [8, 14], "sampling_size": 8, "pool_h": 2, "pool_w": 2}))
        run_dir = self.tmp / "kd0"
        argv = ["train-student", "--data", str(data), "--out", str(run_dir), "--config", str(cfg),
                "--kd-loc0", "on", "--lr", "0.005", "-q"]
        self.assertEqual(run(argv), EXIT_OK)
        resolved = json.loads((run_dir / "resolved_config.json").read_text())
        self.assertEqual(resolved["lr"], 0.005)
        self.assertEqual(resolved["epochs"], 1)
        self.assertTrue(resolved["kd_loc0"])

        model = run_dir / cls2det_cli.STUDENT_CHECKPOINT
        self.assertTrue(model.exists())
        eval_dir = self.tmp / "eval"
        argv = ["eval", "--model", str(model), "--data", str(data), "--out", str(eval_dir), "--dump-predictions", "-q"]
        self.assertEqual(run(argv), EXIT_OK)
        report = json.loads((eval_dir / cls2det_cli.EVAL_REPORT).read_text())
        self.assertIn("metrics", report)
        self.assertTrue((eval_dir / "predictions.jsonl").exists())

        err_dir = self.tmp / "errors"
        argv = ["error-analysis", "--model", str(model), "--data", str(data), "--out", str(err_dir), "-q"]
        self.assertEqual(run(argv), EXIT_OK)
        self.assertTrue((err_dir / cls2det_cli.ERROR_TABLE).exists())

    def test_gradcheck_subset(self):
        out = self.tmp / "gc"
        self.assertEqual(run(["gradcheck", "--op", "add,mul", "--op", "exp", "--seeds", "2",
                              "--out", str(out), "-q"]), EXIT_OK)
        self.assertTrue((out / "gradcheck.csv").exists())

    def test_numerical_and_shape_errors_exit_one(self):
        for error in (NumericalError("kd_loc is nan in batch 3"), ShapeError("cannot pool 4x4 to 8x8")):
            def failing(args, error=error):
                raise error

            with self.subTest(error=type(error).__name__):
                with mock.patch.dict(cls2det_cli.COMMANDS, {"gradcheck": failing}):
                    with self.assertLogs("cls2det", "ERROR") as logs:
                        self.assertEqual(run(["gradcheck", "-q"]), EXIT_CHECK_FAILED)
                self.assertIn(type(error).__name__, logs.output[0])

    def test_gradcheck_unknown_op(self):
        self.assertEqual(run(["gradcheck", "--op", "nope", "--seeds", "1", "-q"]), EXIT_USAGE)


if __name__ == "__main__":
    unittest.main()
