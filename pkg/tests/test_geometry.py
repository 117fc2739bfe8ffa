import unittest

import numpy as np

from cls2det.errors import DegenerateBoxError
from cls2det.utils.geometry import (
    AffineMatrix, BoundingBox, array_to_boxes, box_areas, boxes_to_array, flip_boxes_horizontal,
)


class TestGeometry(unittest.TestCase):
    def test_box_properties(self):
        b = BoundingBox(2, 3, 10, 7)
        self.assertEqual((b.width, b.height, b.area), (8, 4, 32))
        self.assertEqual(b.clamp(8, 5).as_tuple(), (2, 3, 8, 5))

    def test_degenerate_box(self):
        with self.assertRaises(DegenerateBoxError):
            BoundingBox(4, 0, 4, 5).validate()
        self.assertEqual(BoundingBox(5, 5, 1, 1).area, 0.0)

    def test_array_conversions(self):
        a = np.array([[0, 0, 2, 2], [1, 1, 4, 3]], dtype=np.float64)
        np.testing.assert_array_equal(boxes_to_array(array_to_boxes(a)), a)
        self.assertEqual(boxes_to_array([]).shape, (0, 4))
        np.testing.assert_array_equal(box_areas(a), [4, 6])

    def test_flip(self):
        flipped = flip_boxes_horizontal([[1, 2, 5, 6]], 10)
        np.testing.assert_array_equal(flipped, [[5, 2, 9, 6]])
        np.testing.assert_array_equal(flip_boxes_horizontal(flipped, 10), [[1, 2, 5, 6]])

    def test_axis_aligned(self):
        self.assertTrue(AffineMatrix(np.array([[0.5, 0, 0.1], [0, 0.25, 0]])).is_axis_aligned)
        self.assertFalse(AffineMatrix(np.array([[0.5, 0.1, 0], [0, 0.5, 0]])).is_axis_aligned)


if __name__ == "__main__":
    unittest.main()
