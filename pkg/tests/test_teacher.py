import unittest

import numpy as np

from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import ShapeError
from cls2det.models.teacher import TeacherModel, predict_labels


class TestTeacherModel(unittest.TestCase):
    def setUp(self):
        self.model = TeacherModel(4, 32, (8, 12), 3, seed=5)
        self.x = np.random.default_rng(0).uniform(size=(3, 3, 32, 32))

    def test_forward_shapes(self):
        logits, taps = self.model.forward(DiffTensor(self.x), ("l1", "l2"))
        self.assertEqual(logits.shape, (3, 4))
        self.assertEqual(taps["l1"].shape, (3, 8, 16, 16))
        self.assertEqual(taps["l2"].shape, (3, 12, 8, 8))

    def test_features_accept_any_size(self):
        feats = self.model.features(DiffTensor(np.ones((2, 3, 12, 12))), ["l1"])
        self.assertEqual(list(feats), ["l1"])
        self.assertEqual(feats["l1"].shape, (2, 8, 6, 6))

    def test_input_checks(self):
        with self.assertRaises(ShapeError):
            self.model.forward(DiffTensor(np.ones((1, 3, 16, 16))))
        with self.assertRaises(ShapeError):
            self.model.features(DiffTensor(np.ones((1, 3, 8, 8))), ["l3"])

    def test_seeded_initialization(self):
        other = TeacherModel(4, 32, (8, 12), 3, seed=5)
        self.assertEqual(self.model.checksum(), other.checksum())
        self.assertNotEqual(self.model.checksum(), TeacherModel(4, 32, (8, 12), 3, seed=6).checksum())

    def test_freeze(self):
        self.model.freeze()
        logits, _ = self.model.forward(DiffTensor(self.x))
        self.assertFalse(logits.requires_grad)
        self.assertTrue(all(not p.requires_grad for p in self.model.parameters()))

    def test_architecture_round_trip(self):
        clone = TeacherModel.from_architecture(self.model.architecture)
        self.assertEqual(clone.architecture, self.model.architecture)

    def test_predict_labels(self):
        labels = predict_labels(self.model, self.x, batch_size=2)
        logits, _ = self.model.forward(DiffTensor(self.x))
        np.testing.assert_array_equal(labels, logits.data.argmax(axis=1))
        self.assertEqual(predict_labels(self.model, np.zeros((0, 3, 32, 32))).shape, (0,))


if __name__ == "__main__":
    unittest.main()
