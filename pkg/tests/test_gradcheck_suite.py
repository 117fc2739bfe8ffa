import unittest

from cls2det.diffmath import ops
from cls2det.diffmath.gradcheck import grad_check
from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import ConfigError
from cls2det.gradcheck_suite import GRADCHECKS, run_gradchecks
from tests.test_gradcheck import doubled_square


def check_bad_square(seed: int) -> float:
    x = DiffTensor([0.5 + seed, -1.5, 2.0])
    return grad_check(lambda t: ops.sum_(doubled_square(t)), x)


def check_good_square(seed: int) -> float:
    x = DiffTensor([0.5 + seed, -1.5, 2.0])
    return grad_check(lambda t: ops.sum_(ops.mul(t, t)), x)


class TestGradCheckSuite(unittest.TestCase):
    def test_registry_covers_losses_and_sampling(self):
        for name in ("conv2d", "spatial_transform_crop", "adaptive_avg_pool", "kd_cls_loss_categorical",
                     "kd_cls_loss_binary", "kd_loc_feature_loss", "kd_loc_pixel_loss",
                     "detection_loss_categorical", "detection_loss_binary", "total_loss"):
            with self.subTest(name=name):
                self.assertIn(name, GRADCHECKS)

    def test_selected_checks_pass(self):
        only = ["add", "softmax_t", "conv2d", "kd_cls_loss_categorical"]
        table = run_gradchecks(seeds=2, only=only)
        self.assertEqual(table["op"].tolist(), only)
        self.assertTrue(table["passed"].all(), table.to_string())
        self.assertTrue((table["seeds"] == 2).all())

    def test_full_registry_over_twenty_seeds(self):
        table = run_gradchecks(seeds=20)
        self.assertEqual(sorted(table["op"]), sorted(GRADCHECKS))
        failed = table.loc[~table["passed"]]
        self.assertTrue(failed.empty, failed.to_string())
        self.assertTrue((table["max_rel_error"] < 1e-3).all())

    def test_unknown_check_rejected(self):
        with self.assertRaises(ConfigError):
            run_gradchecks(seeds=1, only=["no_such_op"])

    def test_corrupted_backward_fails(self):
        table = run_gradchecks(seeds=2, checks={"good": check_good_square, "bad": check_bad_square})
        passed = dict(zip(table["op"], table["passed"]))
        self.assertTrue(passed["good"])
        self.assertFalse(passed["bad"])


if __name__ == "__main__":
    unittest.main()
