import unittest

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor, Tape, backward, no_grad
from cls2det.errors import DomainError, ShapeError


def leaf(values):
    return DiffTensor(values, requires_grad=True)


class TestBroadcasting(unittest.TestCase):
    def test_equal_shapes_and_scalars(self):
        a = DiffTensor([[1.0, 2.0], [3.0, 4.0]])
        self.assertEqual(ops.add(a, 1.0).shape, (2, 2))
        self.assertEqual(ops.mul(DiffTensor(2.0), a).shape, (2, 2))

    def test_mismatched_shapes_raise(self):
        with self.assertRaises(ShapeError):
            ops.add(DiffTensor(np.ones((2, 3))), DiffTensor(np.ones(3)))

    def test_scalar_operand_gradient_is_summed(self):
        a = leaf(np.ones((2, 3)))
        c = leaf(2.0)
        backward(ops.sum_(ops.mul(a, c)))
        self.assertEqual(c.grad.shape, ())
        self.assertAlmostEqual(float(c.grad), 6.0)
        np.testing.assert_allclose(a.grad, np.full((2, 3), 2.0))


class TestPointwise(unittest.TestCase):
    def test_log_rejects_non_positive(self):
        with self.assertRaises(DomainError):
            ops.log(DiffTensor([1.0, 0.0]))

    def test_power_zero_is_ones_with_zero_gradient(self):
        x = leaf([0.0, 2.0, -3.0])
        y = ops.power(x, 0)
        np.testing.assert_array_equal(y.data, np.ones(3))
        backward(ops.sum_(y))
        np.testing.assert_array_equal(x.grad, np.zeros(3))

    def test_clip_gradient_is_zero_outside(self):
        x = leaf([-2.0, 0.5, 3.0])
        backward(ops.sum_(ops.clip(x, -1.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_smooth_l1_branches(self):
        y = ops.smooth_l1(DiffTensor([0.5, -2.0]), beta=1.0)
        np.testing.assert_allclose(y.data, [0.125, 1.5])

    def test_relu_gradient(self):
        x = leaf([-1.0, 2.0])
        backward(ops.sum_(ops.relu(x)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])


class TestSoftenedDistributions(unittest.TestCase):
    def test_softmax_rows_sum_to_one(self):
        z = DiffTensor(np.random.default_rng(0).normal(size=(4, 5)) * 10)
        p = ops.softmax_t(z, 3.0)
        np.testing.assert_allclose(p.data.sum(axis=-1), np.ones(4))

    def test_softmax_survives_huge_logits(self):
        p = ops.softmax_t(DiffTensor([[1000.0, 0.0, -1000.0]]), 1.0)
        self.assertTrue(np.isfinite(p.data).all())
        self.assertAlmostEqual(p.data[0, 0], 1.0)

    def test_log_softmax_matches_log_of_softmax(self):
        z = DiffTensor([[0.3, -1.2, 2.0]])
        np.testing.assert_allclose(ops.log_softmax_t(z, 2.0).data, np.log(ops.softmax_t(z, 2.0).data))

    def test_temperature_must_be_positive(self):
        for T in (0.0, -1.0):
            with self.subTest(T=T):
                with self.assertRaises(DomainError):
                    ops.softmax_t(DiffTensor([[1.0, 2.0]]), T)
                with self.assertRaises(DomainError):
                    ops.sigmoid_t(DiffTensor([1.0]), T)

    def test_log_sigmoid_is_finite_for_large_inputs(self):
        out = ops.log_sigmoid_t(DiffTensor([-800.0, 0.0, 800.0]), 1.0)
        self.assertTrue(np.isfinite(out.data).all())
        self.assertAlmostEqual(out.data[1], np.log(0.5))
        self.assertAlmostEqual(out.data[0], -800.0)

    def test_sigmoid_symmetry(self):
        z = DiffTensor([-3.0, 0.5, 7.0])
        a = ops.sigmoid_t(z, 2.0).data
        b = ops.sigmoid_t(ops.neg(z), 2.0).data
        np.testing.assert_allclose(a + b, np.ones(3))


class TestReductionsAndShapes(unittest.TestCase):
    def test_max_routes_gradient_to_first_maximum(self):
        x = leaf([[1.0, 3.0, 3.0], [2.0, 0.0, 2.0]])
        backward(ops.sum_(ops.max_(x, axes=1)))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])

    def test_mean_gradient(self):
        x = leaf(np.ones((2, 4)))
        backward(ops.mean(x))
        np.testing.assert_allclose(x.grad, np.full((2, 4), 1.0 / 8.0))

    def test_invalid_axis(self):
        with self.assertRaises(ShapeError):
            ops.sum_(DiffTensor(np.ones((2, 2))), axes=2)

    def test_take_accumulates_repeated_indices(self):
        x = leaf([1.0, 2.0, 3.0])
        backward(ops.sum_(ops.take(x, [0, 0, 2])))
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])

    def test_index_accumulates_repeated_indices(self):
        x = leaf([[1.0, 2.0], [3.0, 4.0]])
        backward(ops.sum_(ops.index(x, (np.array([1, 1]), np.array([0, 0])))))
        np.testing.assert_array_equal(x.grad, [[0.0, 0.0], [2.0, 0.0]])

    def test_reshape_mismatch(self):
        with self.assertRaises(ShapeError):
            ops.reshape(DiffTensor(np.ones(6)), (4, 2))

    def test_concat_and_stack_split_gradients(self):
        a, b = leaf([1.0, 2.0]), leaf([3.0])
        backward(ops.sum_(ops.mul(ops.concat([a, b]), DiffTensor([1.0, 2.0, 3.0]))))
        np.testing.assert_array_equal(a.grad, [1.0, 2.0])
        np.testing.assert_array_equal(b.grad, [3.0])
        c, d = leaf([1.0, 1.0]), leaf([2.0, 2.0])
        s = ops.stack([c, d], axis=1)
        self.assertEqual(s.shape, (2, 2))
        backward(ops.sum_(s))
        np.testing.assert_array_equal(d.grad, [1.0, 1.0])


class TestTape(unittest.TestCase):
    def test_shared_subexpression_accumulates(self):
        x = leaf(3.0)
        y = ops.mul(x, x)
        backward(ops.add(y, y))
        self.assertAlmostEqual(float(x.grad), 12.0)

    def test_backward_of_sum_is_sum_of_backwards(self):
        values = np.random.default_rng(4).normal(size=(3, 2))

        def first(x):
            return ops.sum_(ops.mul(x, x))

        def second(x):
            return ops.mean(ops.exp(ops.scale(x, 0.5)))

        a, b, both = leaf(values), leaf(values), leaf(values)
        first(a).backward()
        second(b).backward()
        ops.add(first(both), second(both)).backward()
        np.testing.assert_allclose(both.grad, a.grad + b.grad, rtol=1e-12)

        # two separate backward passes into one leaf accumulate
        twice = leaf(values)
        first(twice).backward()
        second(twice).backward()
        np.testing.assert_allclose(twice.grad, a.grad + b.grad, rtol=1e-12)

    def test_tape_is_topologically_ordered(self):
        x = leaf([1.0, 2.0])
        out = ops.sum_(ops.exp(ops.scale(x, 2.0)))
        tape = Tape.from_output(out)
        produced = set()
        for entry in tape.entries:
            for inp in entry.inputs:
                self.assertTrue(inp.is_leaf or id(inp) in produced)
            produced.add(id(entry.output))

    def test_no_grad_records_nothing(self):
        x = leaf([1.0])
        with no_grad():
            y = ops.exp(x)
        self.assertFalse(y.requires_grad)
        self.assertTrue(y.is_leaf)

    def test_operation_leaves_inputs_unchanged(self):
        data = np.array([1.0, -2.0])
        x = leaf(data)
        backward(ops.sum_(ops.relu(x)))
        np.testing.assert_array_equal(x.data, data)

    def test_non_scalar_backward_needs_seed(self):
        x = leaf([1.0, 2.0])
        with self.assertRaises(ShapeError):
            backward(ops.exp(x))


if __name__ == "__main__":
    unittest.main()
