import unittest

import numpy as np

from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import ConfigError, ShapeError
from cls2det.models.anchors import anchor_array, assign_anchors, decode_boxes, encode_boxes, generate_anchors

GRID = anchor_array(16, 8, (8,), (1,))


class TestAnchorGrid(unittest.TestCase):
    def test_row_major_order(self):
        np.testing.assert_allclose(GRID, [[0, 0, 8, 8], [8, 0, 16, 8], [0, 8, 8, 16], [8, 8, 16, 16]])

    def test_scales_and_ratios(self):
        a = anchor_array(8, 8, (4, 8), (1, 4))
        self.assertEqual(a.shape, (4, 4))
        widths = a[:, 2] - a[:, 0]
        heights = a[:, 3] - a[:, 1]
        np.testing.assert_allclose(widths, [4, 8, 8, 16])
        np.testing.assert_allclose(heights, [4, 2, 8, 4])
        self.assertEqual(len(generate_anchors(8, 8, (4, 8), (1, 4))), 4)

    def test_stride_must_divide(self):
        with self.assertRaises(ConfigError):
            anchor_array(10, 4, (4,), (1,))


class TestAssignment(unittest.TestCase):
    def test_positive_negative_and_forced(self):
        gts = np.array([[0, 0, 8, 8], [9, 9, 12, 12]], dtype=float)
        asg = assign_anchors(GRID, gts, [1, 2])
        np.testing.assert_array_equal(asg.positive_indices, [0, 3])
        np.testing.assert_array_equal(asg.matched_labels, [1, 2])
        np.testing.assert_array_equal(asg.forced, [False, True])
        np.testing.assert_array_equal(asg.negative_indices, [1, 2])
        self.assertEqual(asg.num_positives, 2)

    def test_ignored_band_and_claimed_anchor(self):
        gts = np.array([[0, 0, 8, 8], [4, 0, 12, 8]], dtype=float)
        asg = assign_anchors(GRID, gts, [0, 1], pos_thresh=0.5, neg_thresh=0.3)
        np.testing.assert_array_equal(asg.positive_indices, [0])
        np.testing.assert_array_equal(asg.matched_gt, [0])
        np.testing.assert_array_equal(asg.ignored_indices, [1])
        np.testing.assert_array_equal(asg.negative_indices, [2, 3])

    def test_ground_truth_order_only_permutes_matches(self):
        anchors = anchor_array(32, 4, (8.0, 12.0), (1.0,))
        gts = np.array([[1.3, 2.1, 9.7, 11.4], [15.2, 3.3, 27.9, 12.6],
                        [4.4, 17.8, 13.1, 29.5], [18.6, 19.2, 30.3, 26.7]])
        labels = np.array([0, 1, 2, 1])
        base = assign_anchors(anchors, gts, labels)
        self.assertGreaterEqual(base.num_positives, 4)
        for perm in ([3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]):
            with self.subTest(perm=perm):
                perm = np.array(perm)
                asg = assign_anchors(anchors, gts[perm], labels[perm])
                np.testing.assert_array_equal(asg.positive_indices, base.positive_indices)
                np.testing.assert_array_equal(asg.negative_indices, base.negative_indices)
                np.testing.assert_array_equal(asg.forced, base.forced)
                # position j of the permuted list holds original gt perm[j]
                np.testing.assert_array_equal(perm[asg.matched_gt], base.matched_gt)
                np.testing.assert_array_equal(asg.matched_boxes, base.matched_boxes)
                np.testing.assert_array_equal(asg.matched_labels, base.matched_labels)

    def test_no_ground_truth(self):
        asg = assign_anchors(GRID, np.zeros((0, 4)), [])
        self.assertEqual(asg.num_positives, 0)
        np.testing.assert_array_equal(asg.negative_indices, np.arange(4))

    def test_threshold_order(self):
        with self.assertRaises(ConfigError):
            assign_anchors(GRID, [[0, 0, 8, 8]], [0], pos_thresh=0.3, neg_thresh=0.5)


class TestOffsets(unittest.TestCase):
    def test_decode_inverts_encode(self):
        boxes = np.array([[1, 2, 7, 9], [9, 1, 15, 6], [0, 8, 10, 16], [7, 7, 13, 15]], dtype=float)
        decoded = decode_boxes(GRID, DiffTensor(encode_boxes(GRID, boxes)))
        np.testing.assert_allclose(decoded.data, boxes, atol=1e-12)

    def test_zero_offsets_give_anchors(self):
        np.testing.assert_allclose(decode_boxes(GRID, DiffTensor(np.zeros((4, 4)))).data, GRID)

    def test_size_offsets_are_clamped(self):
        out = decode_boxes(GRID[:1], DiffTensor([[0.0, 0.0, 10.0, 0.0]])).data
        self.assertAlmostEqual(out[0, 2] - out[0, 0], 8 * np.exp(4.0))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            decode_boxes(GRID, DiffTensor(np.zeros((3, 4))))


if __name__ == "__main__":
    unittest.main()
