import tempfile
import unittest
from pathlib import Path

import numpy as np

from cls2det.errors import ConfigError, DatasetFormatError
from cls2det.synthdata.dataset_io import (
    META_FILE, TRAIN_FILE, VAL_FILE, ClassificationDataset, DatasetMeta, build_detection_dataset,
    encode_detection_dataset, load_meta, read_classification_dataset, read_detection_dataset,
    write_classification_dataset, write_detection_dataset,
)
from cls2det.synthdata.scenes import Annotation, SceneImage, SceneSpec

SPEC = SceneSpec(image_size=16, num_classes=3, max_objects=2, min_size=6, max_size=8)


def scene(label=1):
    pixels = np.full((3, 16, 16), 0.25)
    return SceneImage(pixels), Annotation(np.array([[2.0, 3.0, 10.0, 11.0]]), np.array([label]))


class TestDetectionFiles(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_then_read(self):
        path = write_detection_dataset(self.dir / "a.kdds", 3, 16, [scene(), scene(2)])
        data = read_detection_dataset(path)
        self.assertEqual((len(data), data.num_classes, data.image_size, data.num_objects), (2, 3, 16, 2))
        np.testing.assert_allclose(data.images[0], np.full((3, 16, 16), 0.25))
        np.testing.assert_array_equal(data.annotations[1].labels, [2])

    def test_bad_magic(self):
        path = self.dir / "bad.kdds"
        buf = bytearray(encode_detection_dataset(3, 16, [scene()]))
        buf[:4] = b"XXXX"
        path.write_bytes(bytes(buf))
        with self.assertRaises(DatasetFormatError):
            read_detection_dataset(path)

    def test_truncated_and_trailing(self):
        buf = encode_detection_dataset(3, 16, [scene(), scene()])
        (self.dir / "short.kdds").write_bytes(buf[:-3])
        (self.dir / "long.kdds").write_bytes(buf + b"\0")
        with self.assertRaisesRegex(DatasetFormatError, "record 1"):
            read_detection_dataset(self.dir / "short.kdds")
        with self.assertRaisesRegex(DatasetFormatError, "trailing"):
            read_detection_dataset(self.dir / "long.kdds")

    def test_label_out_of_range(self):
        (self.dir / "label.kdds").write_bytes(encode_detection_dataset(3, 16, [scene(5)]))
        with self.assertRaises(DatasetFormatError):
            read_detection_dataset(self.dir / "label.kdds")

    def test_wrong_scene_size(self):
        with self.assertRaises(ConfigError):
            encode_detection_dataset(3, 32, [scene()])


class TestClassificationFiles(unittest.TestCase):
    def test_write_then_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            crops = np.random.default_rng(0).uniform(size=(4, 3, 8, 8))
            data = ClassificationDataset(3, 8, crops, np.array([0, 1, 2, 0]))
            back = read_classification_dataset(write_classification_dataset(Path(tmp) / "c.kdcl", data))
            np.testing.assert_allclose(back.crops, crops.astype(np.float32))
            np.testing.assert_array_equal(back.labels, [0, 1, 2, 0])

    def test_detection_file_is_not_crops(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_detection_dataset(Path(tmp) / "a.kdds", 3, 16, [scene()])
            with self.assertRaises(DatasetFormatError):
                read_classification_dataset(path)


class TestBuildDataset(unittest.TestCase):
    def test_deterministic_for_a_seed(self):
        with tempfile.TemporaryDirectory() as tmp:
            a, b, c = (Path(tmp) / name for name in ("a", "b", "c"))
            meta_a = build_detection_dataset(11, 4, 2, SPEC, a, parallel=2)
            meta_b = build_detection_dataset(11, 4, 2, SPEC, b, parallel=1)
            meta_c = build_detection_dataset(12, 4, 2, SPEC, c)
            self.assertEqual((a / TRAIN_FILE).read_bytes(), (b / TRAIN_FILE).read_bytes())
            self.assertEqual((a / VAL_FILE).read_bytes(), (b / VAL_FILE).read_bytes())
            self.assertEqual(meta_a.dataset_hash, meta_b.dataset_hash)
            self.assertNotEqual(meta_a.dataset_hash, meta_c.dataset_hash)
            self.assertEqual(len(read_detection_dataset(a / TRAIN_FILE)), 4)

    def test_meta_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            build_detection_dataset(1, 2, 1, SPEC, Path(tmp))
            self.assertTrue((Path(tmp) / META_FILE).exists())
            meta = load_meta(Path(tmp))
            self.assertEqual(meta.split_sizes, {"train": 2, "val": 1})
            self.assertEqual(meta.class_names, SPEC.class_names)
            self.assertIsNone(load_meta(Path(tmp) / "missing"))

    def test_split_sizes_and_meta_validation(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                build_detection_dataset(1, 0, 1, SPEC, Path(tmp))
        with self.assertRaises(ConfigError):
            DatasetMeta(1, ["a"], 16, {"train": 1}, 0)


if __name__ == "__main__":
    unittest.main()
