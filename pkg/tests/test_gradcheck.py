import unittest

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.gradcheck import grad_check, grad_check_inputs
from cls2det.diffmath.tensor import DiffTensor, record
from cls2det.errors import NumericalError, ShapeError


def doubled_square(x: DiffTensor) -> DiffTensor:
    """x^2 with a backward rule that is off by a factor of two."""
    return record("bad_square", x.data ** 2, (x,), lambda g: (g * 4.0 * x.data,))


class TestGradCheck(unittest.TestCase):
    def test_correct_gradient_passes(self):
        x = DiffTensor(np.random.default_rng(0).normal(size=(3, 4)))
        err = grad_check(lambda x: ops.sum_(ops.mul(ops.exp(ops.scale(x, 0.5)), x)), x)
        self.assertLess(err, 1e-6)

    def test_corrupted_backward_is_caught(self):
        x = DiffTensor([0.7, -1.3, 2.1])
        err = grad_check(lambda x: ops.sum_(doubled_square(x)), x)
        self.assertGreater(err, 0.1)

    def test_max_coords_subset(self):
        x = DiffTensor(np.random.default_rng(1).normal(size=50))
        err = grad_check(lambda x: ops.sum_(ops.power(x, 2)), x, max_coords=5, seed=3)
        self.assertLess(err, 1e-6)

    def test_multiple_inputs(self):
        a, b = DiffTensor([1.0, 2.0]), DiffTensor([3.0, -1.0])
        err = grad_check_inputs(lambda a, b: ops.sum_(ops.mul(a, b)), [a, b])
        self.assertLess(err, 1e-8)

    def test_vector_valued_function_rejected(self):
        with self.assertRaises(ShapeError):
            grad_check(lambda x: ops.exp(x), DiffTensor([1.0, 2.0]))

    def test_non_finite_value_raises(self):
        with self.assertRaises(NumericalError):
            grad_check(lambda x: ops.sum_(ops.exp(x)), DiffTensor([1000.0]))

    def test_inputs_are_restored(self):
        data = np.array([0.5, 1.5])
        x = DiffTensor(data)
        grad_check(lambda x: ops.sum_(ops.power(x, 3)), x)
        np.testing.assert_array_equal(x.data, data)


if __name__ == "__main__":
    unittest.main()
