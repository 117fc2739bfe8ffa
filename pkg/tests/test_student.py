import unittest

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import ConfigError, ShapeError
from cls2det.models.student import PRIOR_PROBABILITY, StudentDetector


class TestStudentDetector(unittest.TestCase):
    def test_categorical_outputs(self):
        model = StudentDetector(3, "categorical", image_size=32, channels=(4, 4, 4), anchor_scales=(8, 14))
        cls, box = model.forward(DiffTensor(np.zeros((2, 3, 32, 32))))
        self.assertEqual(model.num_anchors, 4 * 4 * 2)
        self.assertEqual(cls.shape, (2, 32, 4))
        self.assertEqual(box.shape, (2, 32, 4))
        self.assertEqual(model.anchors.shape, (32, 4))

    def test_binary_head_prior(self):
        model = StudentDetector(3, "binary", image_size=32, channels=(4, 4, 4))
        self.assertEqual(model.num_logits, 3)
        cls, _ = model.forward(DiffTensor(np.zeros((1, 3, 32, 32))))
        p = 1.0 / (1.0 + np.exp(-cls.data))
        np.testing.assert_allclose(p, np.full(p.shape, PRIOR_PROBABILITY), rtol=1e-6)

    def test_head_layout_follows_anchor_order(self):
        model = StudentDetector(2, "categorical", image_size=16, channels=(2, 2), anchor_scales=(4, 6),
                                zero_heads=True)
        depth = 4
        a = model.anchors_per_cell
        bias = np.arange(a * depth, dtype=float)
        model.params["box.bias"].data = bias
        _, box = model.forward(DiffTensor(np.zeros((1, 3, 16, 16))))
        # anchor index (cell, scale) -> bias block of that scale
        for idx in range(model.num_anchors):
            s = idx % a
            np.testing.assert_allclose(box.data[0, idx], bias[s * depth:(s + 1) * depth])

    def test_gradients_flow_to_all_parameters(self):
        model = StudentDetector(2, "categorical", image_size=16, channels=(2, 2))
        x = np.random.default_rng(0).uniform(size=(1, 3, 16, 16))
        cls, box = model.forward(DiffTensor(x))
        ops.add(ops.sum_(cls), ops.sum_(box)).backward()
        for name, p in model.params.items():
            with self.subTest(param=name):
                self.assertIsNotNone(p.grad)

    def test_config_errors(self):
        with self.assertRaises(ConfigError):
            StudentDetector(3, "softmax")
        with self.assertRaises(ConfigError):
            StudentDetector(3, image_size=60)
        model = StudentDetector(3, image_size=32, channels=(4, 4, 4))
        with self.assertRaises(ShapeError):
            model.forward(DiffTensor(np.zeros((1, 3, 64, 64))))

    def test_architecture_round_trip(self):
        model = StudentDetector(5, "binary", image_size=32, channels=(4, 8, 8), anchor_ratios=(0.5, 2.0))
        clone = StudentDetector.from_architecture(model.architecture)
        self.assertEqual(clone.architecture, model.architecture)
        self.assertEqual(clone.num_anchors, model.num_anchors)


if __name__ == "__main__":
    unittest.main()
