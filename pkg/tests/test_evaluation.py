#!/usr/bin/env python3
"""
Unit tests for the evaluation suite
Tests IoU, the discriminative score, latent probes, the Frechet proxy and reports
"""

import itertools
import unittest
import sys
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

# Add the repository root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.autodiff import Tensor, no_grad
from core.evaluation import (
    iou_3d, DSResult, discriminative_score, latent_probe, latent_interpolation_probe, inversion_gap,
    frechet_proxy, discriminator_features, MetricRecord, write_metric_report, write_probe_distances,
    read_report, train_image_encoder, conditional_iou, train_shape_classifier
)
from core.evaluation.latent_probe import InterpolationStats, SaltationStats
from core.evaluation.shape_classifier import ShapeClassifier, cross_entropy, target_other_batch
from core.gan import Discriminator, Generator
from core.render import RenderSettings
from core.world import OccupancyGrid, ShapeCategory, voxelize, sample_shape


SLOW = os.environ.get("CGC_LAB_SLOW") == "1"


def slab(start, stop, size=4):
    grid = OccupancyGrid.empty(size)
    grid.bits[start:stop, 0, 0] = True
    return grid


class TestIoU(unittest.TestCase):
    """Test voxel intersection over union"""

    def setUp(self):
        """Set up a two-voxel slab"""
        self.grid = slab(0, 2)

    def test_identical(self):
        """Test a grid against itself scores 1"""
        self.assertEqual(iou_3d(self.grid, self.grid).iou, 1.0)

    def test_shifted_by_one(self):
        """Test a one-voxel shift of a two-voxel slab scores 1/3"""
        result = iou_3d(self.grid, slab(1, 3))
        self.assertEqual((result.intersection, result.union), (1, 3))
        self.assertAlmostEqual(result.iou, 1.0 / 3.0)

    def test_disjoint_and_empty(self):
        """Test disjoint grids score 0 and two empty grids score 1"""
        self.assertEqual(iou_3d(self.grid, slab(2, 4)).iou, 0.0)
        self.assertEqual(iou_3d(OccupancyGrid.empty(4), OccupancyGrid.empty(4)).iou, 1.0)

    def test_matches_voxel_count(self):
        """Test random pairs against a voxel-by-voxel count"""
        rng = np.random.default_rng(4)
        for _ in range(100):
            a = rng.uniform(size=(8, 8, 8)) < rng.uniform(0.05, 0.95)
            b = rng.uniform(size=(8, 8, 8)) < rng.uniform(0.05, 0.95)
            both = either = 0
            for index in itertools.product(range(8), repeat=3):
                both += int(a[index] and b[index])
                either += int(a[index] or b[index])
            result = iou_3d(OccupancyGrid(8, a), OccupancyGrid(8, b))
            self.assertEqual((result.intersection, result.union), (both, either))
            self.assertEqual(result.iou, both / either)

    def test_size_mismatch(self):
        """Test grids of different sizes are refused"""
        with self.assertRaises(ValueError):
            iou_3d(self.grid, OccupancyGrid.empty(8))


class TestDiscriminativeScore(unittest.TestCase):
    """Test C / B with stub classifiers"""

    def setUp(self):
        """Set up a conditional generator"""
        self.generator = Generator(4, 8, 4, np.random.default_rng(0), num_classes=4)

    def test_perfect_classifier(self):
        """Test a classifier that always agrees gives 1.0"""
        result = discriminative_score(self.generator, 2, 5, lambda grids: np.full(len(grids), 2), batch_size=2)
        self.assertEqual((result.C, result.B, result.score), (5, 5, 1.0))

    def test_single_miss(self):
        """Test B = 1 with a wrong prediction gives 0"""
        result = discriminative_score(self.generator, 1, 1, lambda grids: np.zeros(len(grids), dtype=int))
        self.assertEqual(result.score, 0.0)

    def test_counts_validated(self):
        """Test impossible counts are refused"""
        with self.assertRaises(ValueError):
            DSResult.from_counts(3, 2)
        with self.assertRaises(ValueError):
            discriminative_score(self.generator, 0, 0, lambda grids: np.zeros(0))


class TestLatentProbes(unittest.TestCase):
    """Test saltation, interpolation and inversion probes"""

    def setUp(self):
        """Set up a generator and a base latent"""
        self.generator = Generator(4, 8, 4, np.random.default_rng(1))
        self.z = np.random.default_rng(2).standard_normal(4)

    def test_zero_scale(self):
        """Test zero noise gives zero distance and only valid neighbours"""
        stats = latent_probe(self.generator, self.z, 5, 0.0)
        self.assertEqual(len(stats.distances), 5)
        self.assertAlmostEqual(stats.max, 0.0, places=10)
        self.assertEqual(stats.valid_fraction, 1.0)

    def test_distance_grows_with_scale(self):
        """Test larger noise moves the representation further"""
        small = latent_probe(self.generator, self.z, 20, 0.01, seed=3)
        large = latent_probe(self.generator, self.z, 20, 1.0, seed=3)
        self.assertGreater(large.mean, small.mean)

    def test_probe_arguments(self):
        """Test invalid probe arguments raise"""
        with self.assertRaises(ValueError):
            latent_probe(self.generator, self.z, 0, 0.1)
        with self.assertRaises(ValueError):
            latent_probe(self.generator, self.z, 3, -0.1)

    def test_empty_stats(self):
        """Test stats with no perturbations report full validity"""
        self.assertEqual(SaltationStats(base_z=self.z, scale=0.1).valid_fraction, 1.0)

    def test_interpolation(self):
        """Test the path yields one distance per step"""
        stats = latent_interpolation_probe(self.generator, self.z, -self.z, steps=6)
        self.assertEqual(len(stats.distances), 6)
        self.assertGreaterEqual(stats.peak_to_mean, 1.0)

    def test_peak_to_mean(self):
        """Test the peak-to-mean ratio on known step lists"""
        self.assertEqual(InterpolationStats([1.0, 1.0, 1.0]).peak_to_mean, 1.0)
        self.assertEqual(InterpolationStats([1.0, 3.0]).peak_to_mean, 1.5)
        self.assertEqual(InterpolationStats([0.0, 0.0]).peak_to_mean, 1.0)

    def test_inversion_gap_with_zero_encoder(self):
        """Test an encoder that always answers 0 leaves the mean latent L1 norm"""
        gap = inversion_gap(self.generator, lambda r: Tensor(np.zeros((r.shape[0], 4))), n=64)
        self.assertAlmostEqual(gap, 4.0 * np.sqrt(2.0 / np.pi), delta=0.6)


class TestFrechet(unittest.TestCase):
    """Test the Frechet proxy"""

    def setUp(self):
        """Set up a Gaussian feature set"""
        self.features = np.random.default_rng(4).standard_normal((64, 3))

    def test_identical_sets(self):
        """Test a set against itself is at distance 0"""
        self.assertAlmostEqual(frechet_proxy(self.features, self.features), 0.0, places=8)

    def test_mean_shift(self):
        """Test shifting every coordinate by 1 adds exactly d"""
        self.assertAlmostEqual(frechet_proxy(self.features, self.features + 1.0), 3.0, places=6)

    def test_too_few_samples(self):
        """Test fewer than 32 samples are refused"""
        with self.assertRaises(ValueError):
            frechet_proxy(self.features[:31], self.features)

    def test_dimension_mismatch(self):
        """Test feature widths must agree"""
        with self.assertRaises(ValueError):
            frechet_proxy(self.features, self.features[:, :2])

    def test_discriminator_features(self):
        """Test features are gathered in batches"""
        discriminator = Discriminator(8, np.random.default_rng(5))
        rgb = np.random.default_rng(6).uniform(size=(5, 8, 8, 3))
        self.assertEqual(discriminator_features(discriminator, rgb, batch_size=2).shape, (5, 16))


class TestShapeClassifier(unittest.TestCase):
    """Test the occupancy classifier used by the discriminative score"""

    def setUp(self):
        """Set up an untrained classifier"""
        self.classifier = ShapeClassifier(4, np.random.default_rng(0))

    def test_target_other_ratio(self):
        """Test batches hold one target for every two others"""
        labels = target_other_batch(np.random.default_rng(1), 2, 4, groups=3)
        self.assertEqual(int(np.sum(labels == 2)), 3)
        self.assertEqual(len(labels), 9)

    def test_uniform_cross_entropy(self):
        """Test zero logits cost log(num_classes)"""
        loss = cross_entropy(Tensor(np.zeros((3, 4))), np.array([0, 1, 3]), 4)
        self.assertAlmostEqual(float(loss.data), np.log(4.0))

    def test_predict(self):
        """Test predictions are labels, and an empty batch gives no labels"""
        grids = [voxelize(sample_shape(ShapeCategory.BOX, seed), 8) for seed in range(3)]
        predictions = self.classifier.predict(grids)
        self.assertEqual(predictions.shape, (3,))
        self.assertTrue(np.all((predictions >= 0) & (predictions < 4)))
        self.assertEqual(self.classifier.predict([]).shape, (0,))

    def test_shift_by_total_stride(self):
        """Test moving a shape four voxels leaves the pooled logits unchanged"""
        grid = np.zeros((1, 16, 16, 16))
        grid[0, 2:6, 3:7, 4:8] = 1.0
        shifted = np.roll(grid, 4, axis=1)
        with no_grad():
            a, b = self.classifier(grid).data, self.classifier(shifted).data
        np.testing.assert_allclose(a, b, atol=1e-12)
        self.assertEqual(self.classifier.hidden.weight.shape, (128, 64))

    @unittest.skipUnless(SLOW, "set CGC_LAB_SLOW=1 to train the classifier")
    def test_training_beats_chance(self):
        """Test a short training run separates the categories"""
        result = train_shape_classifier(resolution=8, steps=200, seed=0)
        self.assertGreater(result.accuracy, 0.5)

    @unittest.skipUnless(SLOW, "set CGC_LAB_SLOW=1 to train the classifier")
    def test_default_training_accuracy(self):
        """Test the default S=16 run reaches 95% held-out accuracy"""
        result = train_shape_classifier(resolution=16, seed=0)
        self.assertGreaterEqual(result.accuracy, 0.95)
        self.assertLess(np.mean(result.losses[-50:]), np.mean(result.losses[:50]))


class TestImageEncoder(unittest.TestCase):
    """Test the image-to-latent regressor behind conditional IoU"""

    def setUp(self):
        """Set up a generator and small render settings"""
        self.generator = Generator(4, 8, 4, np.random.default_rng(7))
        self.settings = RenderSettings(height=8, width=8, samples_per_ray=8)

    def test_training_runs(self):
        """Test a few steps give finite losses"""
        result = train_image_encoder(self.generator, self.settings, steps=2, batch_size=2)
        self.assertEqual(len(result.losses), 2)
        self.assertTrue(np.all(np.isfinite(result.losses)))

    def test_empty_test_set(self):
        """Test conditional IoU needs samples"""
        with self.assertRaises(ValueError):
            conditional_iou(self.generator, lambda rgb: np.zeros((len(rgb), 4)), [])


class TestReports(unittest.TestCase):
    """Test CSV report writers"""

    def setUp(self):
        """Set up a scratch directory"""
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_metric_report(self):
        """Test metric rows are written with nine significant digits"""
        path = write_metric_report(self.tmp / "metrics.csv", [MetricRecord("iou", "abcd", 0, 1.0 / 3.0)])
        rows = read_report(path)
        self.assertEqual(rows, [{"metric": "iou", "config_hash": "abcd", "seed": "0", "value": "0.333333333"}])
        self.assertNotIn(b"\r", path.read_bytes())

    def test_probe_distances(self):
        """Test one row per perturbation"""
        stats = SaltationStats(base_z=np.zeros(2), scale=0.05, distances=[0.1, 0.2], valid=[True, False])
        rows = read_report(write_probe_distances(self.tmp / "probe.csv", [stats]))
        self.assertEqual([row["valid"] for row in rows], ["1", "0"])
        self.assertEqual(rows[1]["scale"], "0.05")


if __name__ == '__main__':
    unittest.main()
