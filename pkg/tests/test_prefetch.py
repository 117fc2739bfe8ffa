import os
import unittest
from unittest import mock

import numpy as np

from cls2det.errors import ConfigError
from cls2det.train.prefetch import batch_rng, batch_slices, flip_mask, map_bounded, prefetch, thread_budget


class TestThreadBudget(unittest.TestCase):
    def test_default_and_env(self):
        with mock.patch.dict(os.environ, {"KD_THREADS": ""}):
            self.assertEqual(thread_budget(), 1)
        with mock.patch.dict(os.environ, {"KD_THREADS": "4"}):
            self.assertEqual(thread_budget(), 4)

    def test_invalid_env(self):
        for raw in ("0", "many"):
            with self.subTest(raw=raw):
                with mock.patch.dict(os.environ, {"KD_THREADS": raw}):
                    with self.assertRaises(ConfigError):
                        thread_budget()


class TestOrdering(unittest.TestCase):
    def test_map_bounded_keeps_order(self):
        for parallel in (1, 4):
            with self.subTest(parallel=parallel):
                self.assertEqual(map_bounded(lambda x: x * x, range(10), parallel), [x * x for x in range(10)])

    def test_prefetch_keeps_order(self):
        for depth in (1, 3):
            with self.subTest(depth=depth):
                self.assertEqual(list(prefetch(lambda i: i + 100, 7, depth)), list(range(100, 107)))


class TestBatchStreams(unittest.TestCase):
    def test_streams_are_reproducible_and_distinct(self):
        a = batch_rng(0, 2, 5, 4).random(3)
        np.testing.assert_array_equal(a, batch_rng(0, 2, 5, 4).random(3))
        self.assertFalse(np.array_equal(a, batch_rng(0, 2, 6, 4).random(3)))
        self.assertFalse(np.array_equal(a, batch_rng(0, 2, 5, 3).random(3)))

    def test_slices_and_flips(self):
        parts = batch_slices(np.arange(7), 3)
        self.assertEqual([p.tolist() for p in parts], [[0, 1, 2], [3, 4, 5], [6]])
        mask = flip_mask(batch_rng(1, 0, 0, 4), 1000)
        self.assertTrue(400 < mask.sum() < 600)


if __name__ == "__main__":
    unittest.main()
