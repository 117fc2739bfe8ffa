import tempfile
import unittest
from pathlib import Path

import numpy as np

from cls2det.diffmath.sampling import crop_and_resize
from cls2det.synthdata.crops import batch_gt_crops, classification_crops, crop_objects, derive_classification_crops
from cls2det.synthdata.dataset_io import DetectionDataset, read_classification_dataset, write_detection_dataset
from cls2det.synthdata.scenes import Annotation, SceneImage


class TestCrops(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.images = rng.uniform(size=(2, 3, 16, 16))
        self.boxes = np.array([[1.0, 2.0, 9.0, 10.0], [4.5, 4.5, 12.2, 15.0]])

    def test_crop_objects(self):
        out = crop_objects(self.images[0], self.boxes, 6)
        self.assertEqual(out.shape, (2, 3, 6, 6))
        np.testing.assert_allclose(out[1], crop_and_resize(self.images[0], self.boxes[1], 6))

    def test_batch_crops_follow_image_index(self):
        out = batch_gt_crops(self.images, [1, 0], self.boxes, 5)
        np.testing.assert_allclose(out[0], crop_and_resize(self.images[1], self.boxes[0], 5))
        np.testing.assert_allclose(out[1], crop_and_resize(self.images[0], self.boxes[1], 5))

    def test_one_crop_per_object(self):
        anns = [Annotation(self.boxes, np.array([0, 2])), Annotation(np.zeros((0, 4)), np.zeros(0, dtype=np.int64))]
        det = DetectionDataset(3, 16, self.images, anns)
        data = classification_crops(det, 8)
        self.assertEqual(len(data), 2)
        np.testing.assert_array_equal(data.labels, [0, 2])
        self.assertEqual(data.crops.shape, (2, 3, 8, 8))

    def test_no_objects(self):
        det = DetectionDataset(3, 16, self.images[:1], [Annotation()])
        data = classification_crops(det, 8)
        self.assertEqual(data.crops.shape, (0, 3, 8, 8))

    def test_derive_writes_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            scenes = [(SceneImage(self.images[0]), Annotation(self.boxes, np.array([1, 1])))]
            det_path = write_detection_dataset(Path(tmp) / "train.kdds", 3, 16, scenes)
            out = Path(tmp) / "crops.kdcl"
            derive_classification_crops(det_path, 8, out)
            back = read_classification_dataset(out)
            self.assertEqual((len(back), back.crop_size), (2, 8))


if __name__ == "__main__":
    unittest.main()
