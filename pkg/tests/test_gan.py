#!/usr/bin/env python3
"""
Unit tests for the 3D generator, the image discriminator and the GAN losses
"""

import unittest
import sys
import os

import numpy as np

# Add the repository root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.autodiff.tensor import Tensor
from core.errors import ShapeMismatchError
from core.gan import (
    Generator, Discriminator, generate, discriminate, extract_geometry, extract_geometry_batch,
    gan_loss_g, gan_loss_d, r1_penalty
)
from core.gan.generator import upsampling_blocks
from core.gan.losses import input_gradient


class TestGenerator(unittest.TestCase):
    """Test the latent-to-voxel generator"""

    def setUp(self):
        """Set up an unconditional and a conditional generator"""
        self.generator = Generator(8, 8, 4, np.random.default_rng(0))
        self.conditional = Generator(8, 8, 4, np.random.default_rng(0), num_classes=4)
        self.z = np.random.default_rng(1).standard_normal((2, 8))

    def test_output_shape(self):
        """Test G(z) is (N, S, S, S, C_r)"""
        self.assertEqual(generate(self.generator, self.z).shape, (2, 8, 8, 8, 4))

    def test_deterministic(self):
        """Test the same weights and latent give the same field"""
        np.testing.assert_array_equal(self.generator(self.z).data, self.generator(self.z).data)

    def test_resolution_must_be_power_of_two(self):
        """Test unsupported resolutions are refused"""
        self.assertEqual(upsampling_blocks(16), 3)
        for resolution in (2, 6, 12):
            with self.assertRaises(ValueError):
                upsampling_blocks(resolution)

    def test_latent_shape_checked(self):
        """Test a latent of the wrong width raises"""
        with self.assertRaises(ValueError):
            self.generator(np.zeros((2, 5)))

    def test_labels_required(self):
        """Test a conditional generator refuses to run without labels"""
        with self.assertRaises(ValueError):
            self.conditional(self.z)

    def test_labels_change_output(self):
        """Test different labels produce different fields"""
        first = self.conditional(self.z, np.array([0, 0])).data
        second = self.conditional(self.z, np.array([3, 3])).data
        self.assertFalse(np.allclose(first, second))

    def test_output_varies_with_latent(self):
        """Test fresh weights keep G(z) sensitive to z through every upsampling block"""
        generator = Generator(32, 8, 4, np.random.default_rng(2))
        z = np.random.default_rng(3).standard_normal((64, 32))
        spread = float(generator(z).data.std(axis=0).mean())
        self.assertGreater(spread, 0.04)


class TestExtractGeometry(unittest.TestCase):
    """Test thresholding a representation into occupancy"""

    def setUp(self):
        """Set up a field with one dense voxel"""
        self.r = np.full((4, 4, 4, 4), -3.0)
        self.r[1, 2, 3, 0] = 3.0

    def test_single_voxel(self):
        """Test only the voxel above the threshold is occupied"""
        grid = extract_geometry(self.r, threshold=2.0)
        self.assertEqual(grid.count(), 1)
        self.assertTrue(grid.bits[1, 2, 3])

    def test_threshold_edge(self):
        """Test softplus(logit) is compared, not the logit itself"""
        r = np.zeros((2, 2, 2, 4))
        r[..., 0] = np.log(np.expm1(2.0)) + 1e-6
        self.assertEqual(extract_geometry(r, threshold=2.0).count(), 8)
        r[..., 0] = np.log(np.expm1(2.0)) - 1e-6
        self.assertEqual(extract_geometry(r, threshold=2.0).count(), 0)

    def test_batch(self):
        """Test the batch variant returns one grid per item"""
        grids = extract_geometry_batch(Tensor(np.stack([self.r, self.r])))
        self.assertEqual(len(grids), 2)

    def test_threshold_must_be_positive(self):
        """Test a non-positive threshold raises"""
        with self.assertRaises(ValueError):
            extract_geometry(self.r, threshold=0.0)


class TestDiscriminator(unittest.TestCase):
    """Test the image discriminator"""

    def setUp(self):
        """Set up discriminators and a batch of images"""
        self.discriminator = Discriminator(8, np.random.default_rng(0))
        self.conditional = Discriminator(8, np.random.default_rng(0), num_classes=4)
        self.images = np.random.default_rng(1).uniform(size=(3, 8, 8, 3))

    def test_logits_shape(self):
        """Test one logit per image"""
        self.assertEqual(discriminate(self.discriminator, self.images).shape, (3,))
        self.assertEqual(self.discriminator.features(self.images).shape, (3, 16))

    def test_wrong_image_size(self):
        """Test mismatched images raise ShapeMismatchError"""
        with self.assertRaises(ShapeMismatchError):
            self.discriminator(np.zeros((1, 16, 16, 3)))

    def test_image_size_divisible_by_eight(self):
        """Test an image size that does not survive three halvings is refused"""
        with self.assertRaises(ValueError):
            Discriminator(12, np.random.default_rng(0))

    def test_projection_term(self):
        """Test labels shift the logit by the projection term"""
        unlabelled = self.conditional(self.images).data
        labelled = self.conditional(self.images, np.array([0, 1, 2])).data
        self.assertFalse(np.allclose(unlabelled, labelled))


class TestLosses(unittest.TestCase):
    """Test the logistic GAN losses and the R1 penalty"""

    def setUp(self):
        """Set up a discriminator and real images"""
        self.discriminator = Discriminator(8, np.random.default_rng(2))
        self.real = np.random.default_rng(3).uniform(size=(2, 8, 8, 3))

    def test_losses_at_zero_logits(self):
        """Test both losses equal multiples of log 2 at zero logits"""
        zeros = Tensor(np.zeros(4))
        self.assertAlmostEqual(float(gan_loss_g(zeros).data), np.log(2.0))
        self.assertAlmostEqual(float(gan_loss_d(zeros, zeros).data), 2.0 * np.log(2.0))

    def test_input_gradient_matches_finite_difference(self):
        """Test the image gradient used by R1 against a central difference"""
        g = input_gradient(self.discriminator, self.real)
        step = 1e-6
        plus, minus = self.real.copy(), self.real.copy()
        plus[1, 4, 5, 2] += step
        minus[1, 4, 5, 2] -= step
        numeric = (self.discriminator(plus).data.sum() - self.discriminator(minus).data.sum()) / (2.0 * step)
        self.assertAlmostEqual(g[1, 4, 5, 2], numeric, delta=1e-6 * max(1.0, abs(numeric)))

    def test_r1_penalty_value(self):
        """Test the logged penalty is gamma / 2 * mean squared gradient norm"""
        g = input_gradient(self.discriminator, self.real)
        result = r1_penalty(self.discriminator, self.real, gamma=4.0)
        expected = 2.0 * np.mean(np.sum(g.reshape(2, -1) ** 2, axis=1))
        self.assertAlmostEqual(result.penalty, expected)
        self.assertEqual(result.surrogate.data.size, 1)


if __name__ == '__main__':
    unittest.main()
