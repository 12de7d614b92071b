#!/usr/bin/env python3
"""
Unit tests for CGC training
Tests the cycle losses, checkpoints, the metrics log and the trainer loop
"""

import unittest
import sys
import os
import shutil
import struct
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
from scipy.special import gammaln

# Add the repository root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.autodiff import Graph, backward, no_grad
from core.encoder import InversionEncoder
from core.errors import CheckpointError, ConfigError, DivergenceError, ShapeMismatchError
from core.gan import Generator
from core.training import (
    SSLMode, LossWeights, TrainConfig, compute_cycle, loss_Z, loss_R, cycle_loss, z_cycle_gap,
    density_laplacian, local_search_pair, Checkpoint, save_checkpoint, load_checkpoint,
    encode_checkpoint, decode_checkpoint, pack_rng, unpack_rng, MetricsLog, MetricsRow,
    read_metrics, columns_for, CGCTrainer
)
from core.render import render_representation
from core.training import trainer as trainer_module
from core.world.dataset import DatasetConfig


SLOW = os.environ.get("CGC_LAB_SLOW") == "1"


def tiny_config(**changes):
    base = dict(resolution=8, latent_dim=4, channels=4, patch_size=4, token_dim=8, image_size=8,
                batch_size=2, warmup_steps=1, total_steps=3, samples_per_ray=8, checkpoint_every=2,
                log_every=1, seed=7)
    base.update(changes)
    return TrainConfig(**base)


def tiny_dataset():
    return DatasetConfig(count=8, seed=7)


class TestCycle(unittest.TestCase):
    """Test the generation-inversion-generation cycle"""

    def setUp(self):
        """Set up a tiny generator, encoder and latent batch"""
        self.generator = Generator(4, 8, 4, np.random.default_rng(0))
        self.encoder = InversionEncoder(8, 4, 4, np.random.default_rng(1), patch_size=4, token_dim=8, heads=2)
        self.z = np.random.default_rng(2).standard_normal((2, 4))

    def test_record_shapes(self):
        """Test the depth-1 record holds r, z* and r*"""
        record = compute_cycle(self.generator, self.encoder, self.z)
        self.assertEqual(record.depth, 1)
        self.assertEqual(record.z_star.shape, (2, 4))
        self.assertEqual(record.r_star.shape, record.r.shape)
        self.assertEqual(z_cycle_gap(record), 0.0)

    def test_depth_two(self):
        """Test a depth-2 cycle adds z** and r** and a gap"""
        record = compute_cycle(self.generator, self.encoder, self.z, depth=2)
        self.assertEqual(record.depth, 2)
        self.assertEqual(record.r_star2.shape, record.r.shape)
        self.assertGreaterEqual(z_cycle_gap(record), 0.0)

    def test_invalid_depth(self):
        """Test only depths 1 and 2 exist"""
        with self.assertRaises(ValueError):
            compute_cycle(self.generator, self.encoder, self.z, depth=3)

    def test_cycle_loss_stops_at_encoder(self):
        """Test L_R sends gradient into G but none into E"""
        with Graph():
            record = compute_cycle(self.generator, self.encoder, self.z)
            backward(cycle_loss(record), self.generator.parameters() + self.encoder.parameters())
        self.assertTrue(any(np.any(p.grad != 0) for p in self.generator.parameters()))
        for param in self.encoder.parameters():
            np.testing.assert_array_equal(param.grad, 0.0)

    def test_loss_values(self):
        """Test L_Z and L_R against direct sums"""
        rng = np.random.default_rng(3)
        z, z_star = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        r, r_star = rng.standard_normal((2, 2, 2, 2, 4)), rng.standard_normal((2, 2, 2, 2, 4))
        self.assertAlmostEqual(float(loss_Z(z, z_star).data), np.abs(z - z_star).sum(axis=1).mean())
        self.assertAlmostEqual(float(loss_R(r, r_star).data), np.abs(r - r_star).mean())
        self.assertEqual(float(loss_R(r, r).data), 0.0)

    def test_loss_shape_mismatch(self):
        """Test mismatched batches name the loss"""
        with self.assertRaises(ShapeMismatchError) as ctx:
            loss_Z(np.zeros((2, 4)), np.zeros((2, 3)))
        self.assertEqual(ctx.exception.op, "loss_Z")

    def test_laplacian(self):
        """Test the Laplacian is zero on linear ramps and 6 on a lone spike"""
        ramp = np.broadcast_to(np.arange(5.0)[:, None, None], (5, 5, 5))[None]
        self.assertEqual(float(density_laplacian(ramp).data), 0.0)
        spike = np.zeros((1, 3, 3, 3))
        spike[0, 1, 1, 1] = 1.0
        self.assertEqual(float(density_laplacian(spike).data), 6.0)

    def test_local_search_rejects_non_positive_noise(self):
        """Test sigma 0 and negative sigma are refused"""
        for sigma in (0.0, -0.1):
            with self.assertRaises(ValueError):
                local_search_pair(self.z, sigma, 0)

    def test_local_search_noise_norm(self):
        """Test the mean ||eps|| over 10^4 draws is sigma sqrt(2) Gamma((d+1)/2) / Gamma(d/2) within 5%"""
        d, sigma = 8, 0.05
        z = np.zeros((10000, d))
        _, z_near = local_search_pair(z, sigma, 11)
        observed = np.linalg.norm(z_near.data - z, axis=1).mean()
        expected = sigma * np.sqrt(2.0) * np.exp(gammaln((d + 1) / 2) - gammaln(d / 2))
        self.assertLess(abs(observed - expected) / expected, 0.05)

    def test_local_search_vanishing_noise(self):
        """Test a tiny sigma gives a partner latent indistinguishable from z"""
        z, z_near = local_search_pair(self.z, 1e-12, 5)
        np.testing.assert_allclose(z_near.data, z.data, rtol=0.0, atol=1e-10)
        self.assertGreater(float(np.abs(z_near.data - z.data).max()), 0.0)


class TestConfig(unittest.TestCase):
    """Test strict training configuration"""

    def setUp(self):
        """Set up a valid tiny config"""
        self.config = tiny_config()

    def test_valid(self):
        """Test the tiny config passes validation"""
        self.assertEqual(self.config.validate(), [])

    def test_round_trip_through_dict(self):
        """Test to_dict output rebuilds the same config"""
        self.assertEqual(TrainConfig.from_dict(self.config.to_dict()), self.config)

    def test_unknown_key(self):
        """Test unknown keys are refused with the key named"""
        with self.assertRaises(ConfigError) as ctx:
            TrainConfig.from_dict({"lambda": 1.0})
        self.assertIn("lambda", str(ctx.exception))
        with self.assertRaises(ConfigError):
            LossWeights.from_dict({"lambda_z": 1.0})

    def test_bad_enum(self):
        """Test an unknown SSL mode is a config error"""
        with self.assertRaises(ConfigError):
            TrainConfig.from_dict({"ssl_mode": "contrastive"})

    def test_field_diagnostics(self):
        """Test every invalid field gets its own diagnostic"""
        config = tiny_config(warmup_steps=3, cycle_depth=3, lr_g=0.0)
        with self.assertRaises(ConfigError) as ctx:
            config.check()
        self.assertEqual(len(ctx.exception.diagnostics), 3)

    def test_wrong_value_types(self):
        """Test strings and booleans in numeric fields are config errors naming the field"""
        for data, field_name in (({"batch_size": "8"}, "train.batch_size"),
                                 ({"lr_g": True}, "train.lr_g"),
                                 ({"log_wall_time": 1}, "train.log_wall_time"),
                                 ({"loss_weights": {"lambda_R": "1"}}, "train.loss_weights.lambda_R")):
            with self.subTest(data=data):
                with self.assertRaises(ConfigError) as ctx:
                    TrainConfig.from_dict(data)
                self.assertIn(field_name, str(ctx.exception))

    def test_integers_fill_float_fields(self):
        """Test a JSON integer is accepted where a number is expected"""
        self.assertEqual(TrainConfig.from_dict({"lr_g": 1}).lr_g, 1)

    def test_sigma_ls_must_be_positive(self):
        """Test a zero local-search noise is refused by validation"""
        problems = tiny_config(loss_weights=LossWeights(sigma_ls=0.0)).validate()
        self.assertEqual(len(problems), 1)
        self.assertIn("sigma_ls", problems[0])


class TestCheckpoint(unittest.TestCase):
    """Test the binary checkpoint codec"""

    def setUp(self):
        """Set up a small checkpoint and a scratch directory"""
        self.tmp = tempfile.mkdtemp()
        rng = np.random.Generator(np.random.PCG64(11))
        rng.integers(2 ** 63, size=5)
        self.checkpoint = Checkpoint(
            step=42, config={"train": {"seed": 1}},
            tensors={"a.weight": np.arange(6.0).reshape(2, 3), "a.bias": np.zeros(3, dtype=np.float32)},
            rng_state=pack_rng(rng))
        self.rng = rng

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_decode_restores_everything(self):
        """Test step, config, tensors and RNG survive encoding"""
        decoded = decode_checkpoint(encode_checkpoint(self.checkpoint))
        self.assertEqual(decoded.step, 42)
        self.assertEqual(decoded.config, {"train": {"seed": 1}})
        np.testing.assert_array_equal(decoded.tensors["a.weight"], self.checkpoint.tensors["a.weight"])
        self.assertEqual(decoded.tensors["a.bias"].dtype, np.float32)
        restored = unpack_rng(decoded.rng_state)
        self.assertEqual(restored.integers(2 ** 63), self.rng.integers(2 ** 63))

    def test_entries_follow_config(self):
        """Test entries start right after the config block and the RNG state closes the file"""
        payload = encode_checkpoint(self.checkpoint)
        (config_len,) = struct.unpack_from("<I", payload, 16)
        offset = 20 + config_len
        (name_len,) = struct.unpack_from("<H", payload, offset)
        self.assertEqual(payload[offset + 2:offset + 2 + name_len], b"a.weight")
        entry_bytes = sum(2 + len(name) + 2 + 4 * array.ndim + array.nbytes
                          for name, array in self.checkpoint.tensors.items())
        self.assertEqual(len(payload), offset + entry_bytes + 32)

    def test_bad_magic(self):
        """Test a foreign file is refused"""
        with self.assertRaises(CheckpointError):
            decode_checkpoint(b"NOPE" + encode_checkpoint(self.checkpoint)[4:])

    def test_truncated(self):
        """Test truncation is reported with the entry being read"""
        payload = encode_checkpoint(self.checkpoint)
        with self.assertRaises(CheckpointError):
            decode_checkpoint(payload[:-40])

    def test_trailing_bytes(self):
        """Test extra bytes at the end are refused"""
        with self.assertRaises(CheckpointError):
            decode_checkpoint(encode_checkpoint(self.checkpoint) + b"\x00")

    def test_missing_file(self):
        """Test loading a missing path raises FileNotFoundError"""
        with self.assertRaises(FileNotFoundError):
            load_checkpoint(Path(self.tmp) / "absent.cgck")

    def test_save_is_stable(self):
        """Test save, load and save again gives identical bytes"""
        first = save_checkpoint(Path(self.tmp) / "one.cgck", self.checkpoint)
        second = save_checkpoint(Path(self.tmp) / "two.cgck", load_checkpoint(first))
        self.assertEqual(first.read_bytes(), second.read_bytes())


class TestMetricsLog(unittest.TestCase):
    """Test the per-step metrics CSV"""

    def setUp(self):
        """Set up a scratch directory and two rows"""
        self.tmp = tempfile.mkdtemp()
        self.rows = [MetricsRow(step=s, loss_gan_g=0.5, loss_gan_d=1.25, loss_z=2.0 / 3.0, loss_r=0.1,
                                loss_aux=0.0, rho=0.5, z_cycle_gap=0.25) for s in (1, 2, 3)]

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_columns(self):
        """Test the cycle-gap column exists only at depth 2"""
        self.assertNotIn("z_cycle_gap", columns_for(1))
        self.assertEqual(columns_for(2)[-1], "z_cycle_gap")

    def test_format(self):
        """Test values are written with nine significant digits and LF endings"""
        log = MetricsLog(Path(self.tmp) / "metrics.csv", cycle_depth=2)
        log.start()
        log.append(self.rows[0])
        text = (Path(self.tmp) / "metrics.csv").read_bytes().decode()
        self.assertNotIn("\r", text)
        self.assertIn("0.666666667", text)
        self.assertEqual(read_metrics(log.path)[0]["z_cycle_gap"], 0.25)

    def test_truncate(self):
        """Test rows after a resume point are dropped"""
        log = MetricsLog(Path(self.tmp) / "metrics.csv")
        for row in self.rows:
            log.append(row)
        self.assertEqual(log.truncate(2), 2)
        self.assertEqual([row["step"] for row in read_metrics(log.path)], [1, 2])


class TestTrainer(unittest.TestCase):
    """Test the alternating training loop on a tiny problem"""

    def setUp(self):
        """Set up a scratch directory"""
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def train_into(self, name, config=None, resume=None):
        trainer = CGCTrainer(config or tiny_config(), tiny_dataset(), output_dir=self.tmp / name)
        return trainer, trainer.train(resume=resume)

    def test_outputs(self):
        """Test a run writes metrics, periodic and final checkpoints"""
        _, result = self.train_into("run")
        self.assertEqual(result.step, 3)
        self.assertEqual([row["step"] for row in read_metrics(result.metrics_path)], [1, 2, 3])
        self.assertTrue((self.tmp / "run" / "checkpoints" / "step_000002.cgck").exists())
        self.assertTrue(result.checkpoint_path.exists())

    def test_warmup_rows_have_no_aux(self):
        """Test the warm-up step logs loss_r with a zero auxiliary term"""
        _, result = self.train_into("run")
        self.assertEqual(result.history[0].loss_aux, 0.0)
        self.assertGreater(result.history[0].loss_r, 0.0)
        self.assertGreater(result.history[1].loss_aux, 0.0)

    def test_deterministic(self):
        """Test two runs with one seed write identical metrics"""
        _, first = self.train_into("a")
        _, second = self.train_into("b")
        self.assertEqual(first.metrics_path.read_bytes(), second.metrics_path.read_bytes())

    def test_resume_matches_uninterrupted(self):
        """Test resuming from a checkpoint reproduces the remaining rows"""
        config = tiny_config(total_steps=4)
        _, full = self.train_into("full", config)
        resumed_dir = self.tmp / "resumed"
        resumed_dir.mkdir()
        shutil.copy(full.metrics_path, resumed_dir / "metrics.csv")
        trainer, resumed = self.train_into("resumed", config,
                                           resume=self.tmp / "full" / "checkpoints" / "step_000002.cgck")
        self.assertEqual(resumed.metrics_path.read_bytes(), full.metrics_path.read_bytes())
        self.assertEqual(trainer.step, 4)

    def test_checkpoint_round_trip(self):
        """Test a trainer checkpoint re-saves to identical bytes"""
        trainer, result = self.train_into("run")
        reloaded = CGCTrainer.from_checkpoint(result.checkpoint_path)
        again = reloaded.save(self.tmp / "again.cgck")
        self.assertEqual(again.read_bytes(), result.checkpoint_path.read_bytes())

    def test_restore_names_bad_entry(self):
        """Test restoring into a differently sized model names the first bad entry"""
        _, result = self.train_into("run")
        other = CGCTrainer(tiny_config(latent_dim=6), tiny_dataset())
        with self.assertRaises(CheckpointError) as ctx:
            other.restore(load_checkpoint(result.checkpoint_path))
        self.assertEqual(ctx.exception.entry, "generator.project.weight")

    def test_generator_step_isolation(self):
        """Test the generator step leaves D and E untouched"""
        trainer = CGCTrainer(tiny_config(), tiny_dataset())
        batch = trainer.sample_batch(0)
        d_before = trainer.discriminator.state_dict()
        e_before = trainer.encoder.state_dict()
        trainer.generator_step(batch, warmup=False)
        for name, value in trainer.discriminator.state_dict().items():
            np.testing.assert_array_equal(value, d_before[name])
        for name, value in trainer.encoder.state_dict().items():
            np.testing.assert_array_equal(value, e_before[name])

    def test_zero_weight_matches_plain_gan(self):
        """Test lambda_R = 0 trains like the plain GAN"""
        cgc = CGCTrainer(tiny_config(loss_weights=LossWeights(lambda_R=0.0)), tiny_dataset())
        plain = CGCTrainer(tiny_config(ssl_mode=SSLMode.NONE), tiny_dataset())
        for trainer in (cgc, plain):
            trainer.run(3)
        for a, b in zip(cgc.history, plain.history):
            np.testing.assert_allclose([a.loss_gan_g, a.loss_gan_d, a.loss_z, a.loss_r],
                                       [b.loss_gan_g, b.loss_gan_d, b.loss_z, b.loss_r], rtol=1e-12)

    def test_aux_scales_with_weight(self):
        """Test doubling the auxiliary weight doubles the auxiliary loss and nothing else"""
        cases = ((SSLMode.CGC, "lambda_R"), (SSLMode.LAPLACIAN, "lambda_lap"), (SSLMode.LOCAL_SEARCH, "lambda_R"))
        for mode, weight in cases:
            with self.subTest(mode=mode.value):
                steps = []
                for value in (1.0, 2.0):
                    config = tiny_config(ssl_mode=mode, loss_weights=LossWeights(**{weight: value}))
                    trainer = CGCTrainer(config, tiny_dataset())
                    steps.append(trainer.generator_step(trainer.sample_batch(0), warmup=False))
                single, double = steps
                self.assertGreater(single.loss_aux, 0.0)
                self.assertEqual(double.loss_aux, 2.0 * single.loss_aux)
                self.assertEqual(double.loss_gan_g, single.loss_gan_g)

    def test_references_rendered_once(self):
        """Test repeated dataset indices reuse the first reference render"""
        trainer = CGCTrainer(tiny_config(), tiny_dataset())
        with patch.object(trainer_module, "reference_batch", wraps=trainer_module.reference_batch) as spy:
            first, labels = trainer.reference_images([0, 1])
            again, labels_again = trainer.reference_images([1, 0, 1])
        self.assertEqual(spy.call_count, 1)
        np.testing.assert_array_equal(again, first[[1, 0, 1]])
        np.testing.assert_array_equal(labels_again, labels[[1, 0, 1]])

    def test_batch_plan_matches_fresh_render(self):
        """Test the per-batch sampling plan renders exactly what a fresh plan does"""
        trainer = CGCTrainer(tiny_config(), tiny_dataset())
        batch = trainer.sample_batch(0)
        with no_grad():
            r = trainer.generator(batch.z, batch.labels)
            planned = render_representation(r, batch.poses, trainer.settings, plan=batch.plan).numpy()
            fresh = render_representation(r, batch.poses, trainer.settings).numpy()
        np.testing.assert_array_equal(planned, fresh)

    @unittest.skipUnless(SLOW, "set CGC_LAB_SLOW=1 to run the default warm-up")
    def test_default_warmup_converges(self):
        """Test L_Z falls during the default 500-step warm-up"""
        trainer = CGCTrainer(TrainConfig(), DatasetConfig())
        rows = trainer.warmup_encoder()
        losses = np.array([row.loss_z for row in rows])
        blocks = losses.reshape(-1, 50).mean(axis=1)
        self.assertLessEqual(blocks[-1], 0.2 * blocks[0])
        for earlier, later in zip(blocks[:-1], blocks[1:]):
            self.assertLessEqual(later, 1.05 * earlier)
        self.assertGreater(losses[-1], 1e-3)

    def test_divergence(self):
        """Test non-finite weights stop training with a DivergenceError"""
        trainer = CGCTrainer(tiny_config(), tiny_dataset())
        trainer.generator.parameters()[0].data[...] = np.nan
        with self.assertRaises(DivergenceError) as ctx:
            trainer.run(1)
        self.assertEqual(ctx.exception.step, 1)


if __name__ == '__main__':
    unittest.main()
