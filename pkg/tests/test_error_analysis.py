import unittest

import numpy as np

from cls2det.eval.detections import Detections, GroundTruth
from cls2det.eval.error_analysis import (
    ERROR_TYPES, SWEEP_THRESHOLDS, TRUE_POSITIVE, classify_image, error_decomposition, error_sweep, error_table,
)

GTS = GroundTruth([[0, 0, 10, 10], [20, 20, 30, 30], [40, 0, 50, 10]], [0, 1, 0])
DETS = Detections(
    [[0, 0, 10, 10],     # true positive
     [0, 0, 10, 10],     # duplicate
     [20, 20, 30, 30],   # classification
     [0, 0, 10, 3],      # localization (IoU 0.3)
     [20, 20, 30, 23],   # both (IoU 0.3, wrong class)
     [60, 60, 70, 70]],  # background
    [0, 0, 0, 0, 0, 1],
    [0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
)


class TestClassifyImage(unittest.TestCase):
    def test_one_error_of_each_type(self):
        e = classify_image(DETS, GTS, 0.5)
        self.assertEqual(e.types, [TRUE_POSITIVE, "duplicate", "classification", "localization", "both", "background"])
        self.assertEqual(e.targets[:5], [0, 0, 1, 0, 1])
        self.assertEqual(e.missed, [2])

    def test_detection_order_does_not_matter(self):
        perm = [5, 3, 1, 0, 4, 2]
        e = classify_image(DETS.select(perm), GTS, 0.5)
        expected = classify_image(DETS, GTS, 0.5).types
        self.assertEqual(e.types, [expected[i] for i in perm])


class TestDecomposition(unittest.TestCase):
    def test_partition_identity(self):
        report = error_decomposition([DETS], [GTS], 0.5, num_classes=2)
        self.assertEqual(report.counts, {t: 1 for t in ERROR_TYPES})
        self.assertEqual(report.num_true_positives + report.false_positive_count, report.num_detections)
        self.assertEqual(report.num_detections, 6)

    def test_fixing_errors_helps(self):
        report = error_decomposition([DETS], [GTS], 0.5, num_classes=2)
        self.assertGreater(report.delta_map["classification"], 0.0)
        self.assertGreater(report.delta_map["missed"], 0.0)
        self.assertGreaterEqual(report.delta_map["duplicate"], 0.0)

    def test_perfect_detections_have_no_errors(self):
        dets = Detections(GTS.boxes, GTS.labels, [0.9, 0.8, 0.7])
        report = error_decomposition([dets], [GTS], 0.5)
        self.assertEqual(sum(report.counts.values()), 0)
        self.assertAlmostEqual(report.base_map, 1.0)
        self.assertTrue(all(v == 0.0 for v in report.delta_map.values()))

    def test_sweep_and_table(self):
        reports = error_sweep([DETS], [GTS], num_classes=2)
        self.assertEqual([r.fg_iou for r in reports], list(SWEEP_THRESHOLDS))
        table = error_table(reports)
        self.assertEqual(len(table), len(SWEEP_THRESHOLDS) * len(ERROR_TYPES))
        self.assertEqual(list(table.columns), ["fg_iou", "error_type", "count", "delta_mAP"])
        for r in reports:
            self.assertEqual(r.num_true_positives + r.false_positive_count, r.num_detections)

    def test_empty_image(self):
        report = error_decomposition([Detections()], [GroundTruth([[0, 0, 5, 5]], [0])], 0.5)
        self.assertEqual(report.counts["missed"], 1)
        self.assertEqual(report.num_detections, 0)


if __name__ == "__main__":
    unittest.main()
