import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from cls2det.eval.coco_metrics import coco_metrics
from cls2det.eval.detections import Detections, GroundTruth
from cls2det.eval.error_analysis import ERROR_TYPES, error_sweep
from cls2det.eval.report import build_eval_report, dump_predictions, metrics_frame, write_error_table, write_json


class TestReport(unittest.TestCase):
    def setUp(self):
        self.gts = [GroundTruth([[0, 0, 10, 10]], [0]), GroundTruth([[5, 5, 15, 15]], [1])]
        self.dets = [Detections([[0, 0, 10, 10]], [0], [0.9]), Detections([[5, 5, 15, 12]], [0], [0.6])]
        self.metrics = coco_metrics(self.dets, self.gts, 2)
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_eval_report_json(self):
        errors = error_sweep(self.dets, self.gts, 2, thresholds=(0.5,))
        path = write_json(self.dir / "sub" / "eval_report.json",
                          build_eval_report(self.metrics, errors, {"checkpoint": "s.kdck"}))
        payload = json.loads(path.read_text())
        self.assertEqual(payload["checkpoint"], "s.kdck")
        self.assertAlmostEqual(payload["metrics"]["mAP"], self.metrics.mAP)
        self.assertEqual(payload["errors"][0]["fg_iou"], 0.5)

    def test_error_table_csv(self):
        table = write_error_table(self.dir / "errors.csv", error_sweep(self.dets, self.gts, 2))
        self.assertTrue((self.dir / "errors.csv").exists())
        self.assertEqual(set(table["error_type"]), set(ERROR_TYPES))

    def test_prediction_dump(self):
        path = dump_predictions(self.dir / "predictions.jsonl", self.dets)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        self.assertEqual([line["image"] for line in lines], [0, 1])
        self.assertEqual(lines[1]["detections"][0]["label"], 0)

    def test_metrics_frame(self):
        frame = metrics_frame(self.metrics)
        self.assertIn("mAP", set(frame["metric"]))
        self.assertEqual(len(frame), 10 + 10)
        self.assertTrue(np.isclose(frame.set_index("metric").loc["AP50", "value"], self.metrics.AP50))


if __name__ == "__main__":
    unittest.main()
