import unittest

import numpy as np

from cls2det.diffmath.tensor import DiffTensor
from cls2det.distill.config import DistillConfig
from cls2det.errors import NumericalError, ShapeError
from cls2det.train.objective import loss_breakdown, total_loss


class TestTotalLoss(unittest.TestCase):
    def test_weighted_sum(self):
        cfg = DistillConfig(lambda_kc=0.5, lambda_kl=2.0)
        total = total_loss(DiffTensor(1.0), DiffTensor(2.0), DiffTensor(3.0), cfg)
        self.assertAlmostEqual(total.item(), 1.0 + 1.0 + 6.0)

    def test_zero_weights_return_detection_loss(self):
        det = DiffTensor(1.5, requires_grad=True)
        total = total_loss(det, DiffTensor(2.0), DiffTensor(3.0), DistillConfig(lambda_kc=0.0, lambda_kl=0.0))
        self.assertIs(total, det)

    def test_missing_terms(self):
        det = DiffTensor(0.25)
        self.assertIs(total_loss(det, None, None, DistillConfig()), det)

    def test_gradient_weights(self):
        kd = DiffTensor(2.0, requires_grad=True)
        total_loss(DiffTensor(1.0), kd, None, DistillConfig(lambda_kc=0.4)).backward()
        self.assertAlmostEqual(float(kd.grad), 0.4)

    def test_non_finite_component(self):
        with self.assertRaisesRegex(NumericalError, "kd_loc"):
            total_loss(DiffTensor(1.0), None, DiffTensor(np.nan), DistillConfig())

    def test_non_scalar_component(self):
        with self.assertRaises(ShapeError):
            total_loss(DiffTensor([1.0, 2.0]), None, None, DistillConfig())

    def test_breakdown(self):
        out = loss_breakdown(DiffTensor(1.0), DiffTensor(0.5), None, DistillConfig(lambda_kc=1.0))
        self.assertEqual(out.to_dict(), {"loss": 1.5, "loss_det": 1.0, "loss_kd_cls": 0.5, "loss_kd_loc": 0.0})


if __name__ == "__main__":
    unittest.main()
