#!/usr/bin/env python3
"""
Test script for the noise schedule, guidance, sampler and denoiser training.
"""

import os
import tempfile
import unittest

import numpy as np
import torch

from diffusion import (DenoiserConfig, DenoiserModel, DiffusionStack, ParamScaler, SamplerConfig, cfg_predict,
                       denoiser_loss, make_schedule, q_sample, renoise, sample, sample_batch, sampling_schedule,
                       train_denoiser)
from errors import CheckpointError, StructuralError, ValidationError
from motion_core import Pose, default_humanoid
from motion_enums import RenoiseMode
from phase_autoencoder import AutoencoderConfig, PhaseCodec
from segmentation import SegmentAnnotation
from synthetic_corpus import CorpusConfig, synth_corpus
from text_encoder import Vocabulary

PROMPTS = ["a person walks forward", "someone waves the right arm"]


def tiny_denoiser(pose_dim: int = 11, num_tokens: int = 4, layers: int = 2) -> DenoiserModel:
    return DenoiserModel(Vocabulary.build(PROMPTS), num_tokens, pose_dim, 3, width=16, layers=layers,
                         heads=2, text_dim=8)


def constant_branches(x_n, n, prompts, pose, text_mask=None, pose_mask=None):
    """T(j, ∅) = 2, T(j, c) = 4, T(∅, ∅) = 1."""
    if bool(text_mask[0]) and bool(pose_mask[0]):
        value = 1.0
    elif bool(text_mask[0]):
        value = 2.0
    else:
        value = 4.0
    return torch.full_like(x_n, value)


class TestSchedule(unittest.TestCase):
    """Test cases for the noise schedule and forward process."""

    def setUp(self):
        self.schedule = make_schedule(1000)

    def test_endpoints(self):
        self.assertLess(float(self.schedule.alpha_bar(1000)), 0.01)
        self.assertAlmostEqual(float(self.schedule.alpha_bar(1)), 1.0 - 1e-4, places=15)
        self.assertEqual(float(self.schedule.alpha_bar(0)), 1.0)

    def test_strictly_decreasing(self):
        self.assertTrue(np.all(np.diff(self.schedule.alpha_bars) < 0))

    def test_invalid_schedule(self):
        with self.assertRaises(ValidationError):
            make_schedule(0)
        with self.assertRaises(ValidationError):
            make_schedule(10, beta_start=0.5, beta_end=0.1)

    def test_q_sample_without_noise(self):
        x0 = np.array([1.0, -2.0, 0.5])
        out = q_sample(x0, 500, np.zeros(3), self.schedule)
        np.testing.assert_array_equal(out, np.sqrt(self.schedule.alpha_bar(500)) * x0)

    def test_q_sample_first_step(self):
        rng = np.random.default_rng(0)
        x0, eps = rng.normal(size=6), rng.normal(size=6)
        out = q_sample(x0, 1, eps, self.schedule)
        self.assertLessEqual(np.linalg.norm(out - x0), 0.02 * np.linalg.norm(x0) + 0.02 * np.linalg.norm(eps))

    def test_q_sample_moments(self):
        rng = np.random.default_rng(1)
        x0 = np.array([1.5, -0.5, 0.0, 2.0])
        n = 300
        draws = 100000
        eps = rng.normal(size=(draws, 4))
        out = q_sample(np.tile(x0, (draws, 1)), np.full(draws, n), eps, self.schedule)
        alpha_bar = float(self.schedule.alpha_bar(n))
        standard_error = np.sqrt((1.0 - alpha_bar) / draws)
        np.testing.assert_array_less(np.abs(out.mean(axis=0) - np.sqrt(alpha_bar) * x0), 4 * standard_error)
        variance_se = (1.0 - alpha_bar) * np.sqrt(2.0 / (draws - 1))
        np.testing.assert_array_less(np.abs(out.var(axis=0, ddof=1) - (1.0 - alpha_bar)), 4 * variance_se)

    def test_q_sample_torch_rows(self):
        x0 = torch.ones(2, 3, dtype=torch.float64)
        out = q_sample(x0, torch.tensor([1, 1000]), torch.zeros(2, 3, dtype=torch.float64), self.schedule)
        self.assertAlmostEqual(float(out[0, 0]), np.sqrt(self.schedule.alpha_bar(1)), places=12)
        self.assertAlmostEqual(float(out[1, 0]), np.sqrt(self.schedule.alpha_bar(1000)), places=12)

    def test_q_sample_rejects_bad_step(self):
        with self.assertRaises(ValidationError):
            q_sample(np.zeros(3), 0, np.zeros(3), self.schedule)
        with self.assertRaises(ValidationError):
            q_sample(np.zeros(3), 1001, np.zeros(3), self.schedule)

    def test_q_sample_shape_mismatch(self):
        with self.assertRaises(StructuralError):
            q_sample(np.zeros(3), 5, np.zeros(4), self.schedule)

    def test_sampling_schedule(self):
        self.assertEqual(sampling_schedule(5), [5, 4, 3, 2, 1])
        self.assertEqual(sampling_schedule(1000, 1), [1000])
        strided = sampling_schedule(1000, 10)
        self.assertEqual((strided[0], strided[-1]), (1000, 1))
        self.assertEqual(strided, sorted(strided, reverse=True))


class TestGuidance(unittest.TestCase):
    """Test cases for classifier-free guidance."""

    def setUp(self):
        self.x = torch.zeros(1, 6)
        self.n = torch.tensor([3])
        self.pose = torch.zeros(1, 11)

    def test_three_branch_combination(self):
        out = cfg_predict(constant_branches, self.x, self.n, ["walk"], self.pose, 2.5)
        np.testing.assert_allclose(out.numpy(), 9.5)

    def test_zero_scale_is_pose_only_branch(self):
        out = cfg_predict(constant_branches, self.x, self.n, ["walk"], self.pose, 0.0)
        np.testing.assert_allclose(out.numpy(), 2.0)

    def test_unit_scale_identity(self):
        out = cfg_predict(constant_branches, self.x, self.n, ["walk"], self.pose, 1.0)
        np.testing.assert_allclose(out.numpy(), 2.0 + 4.0 - 1.0)

    def test_cancellation(self):
        def equal_branches(x_n, n, prompts, pose, text_mask=None, pose_mask=None):
            return torch.full_like(x_n, 2.0 if bool(text_mask[0]) and not bool(pose_mask[0]) else 5.0)

        for scale in (0.0, 1.5, 7.0):
            out = cfg_predict(equal_branches, self.x, self.n, ["walk"], self.pose, scale)
            np.testing.assert_allclose(out.numpy(), 2.0)


class TestSampler(unittest.TestCase):
    """Test cases for the reverse chain."""

    def setUp(self):
        torch.manual_seed(0)
        self.model = tiny_denoiser()
        self.model.eval()
        self.schedule = make_schedule(20)

    def test_deterministic_given_seed(self):
        config = SamplerConfig(seed=5)
        a = sample(self.model, self.schedule, PROMPTS[0], None, config)
        b = sample(self.model, self.schedule, PROMPTS[0], None, config)
        np.testing.assert_array_equal(a.to_matrix(), b.to_matrix())
        self.assertTrue(np.all(a.amplitudes >= 0))
        self.assertTrue(np.all((a.shifts >= 0) & (a.shifts < 1)))

    def test_other_seed_differs(self):
        a = sample(self.model, self.schedule, PROMPTS[0], None, SamplerConfig(seed=1))
        b = sample(self.model, self.schedule, PROMPTS[0], None, SamplerConfig(seed=2))
        self.assertFalse(np.array_equal(a.to_matrix(), b.to_matrix()))

    def test_single_step_is_one_prediction(self):
        schedule = make_schedule(1)
        config = SamplerConfig(guidance=2.0, seed=9)
        result = sample_batch(self.model, schedule, [PROMPTS[1]], None, config)
        noise = torch.randn(1, self.model.vector_dim, generator=torch.Generator().manual_seed(9))
        with torch.no_grad():
            expected = cfg_predict(self.model, noise, torch.tensor([1]), [PROMPTS[1]], None, 2.0)
        np.testing.assert_allclose(result, expected.double().numpy(), atol=1e-6)

    def test_pose_conditioning_accepted(self):
        skeleton_joints = 2
        pose = Pose(np.array([0.0, 0.9, 0.0]), np.tile([1.0, 0, 0, 0], (skeleton_joints, 1)))
        params = sample(self.model, self.schedule, PROMPTS[0], pose, SamplerConfig(sampling_steps=4))
        self.assertEqual(params.num_phases, 4)

    def test_marginal_and_posterior_renoise(self):
        for mode in RenoiseMode:
            params = sample(self.model, self.schedule, PROMPTS[0], None, SamplerConfig(renoise=mode.value))
            self.assertTrue(np.all(np.isfinite(params.to_vector())))

    def test_marginal_renoise_formula(self):
        x0_hat = torch.tensor([[1.0, -1.0]], dtype=torch.float64)
        noise = torch.tensor([[0.5, 0.25]], dtype=torch.float64)
        out = renoise(torch.zeros_like(x0_hat), x0_hat, 10, 4, self.schedule, RenoiseMode.MARGINAL, noise)
        ab = float(self.schedule.alpha_bar(4))
        np.testing.assert_allclose(out.numpy(), np.sqrt(ab) * x0_hat.numpy() + np.sqrt(1 - ab) * noise.numpy())

    def test_invalid_sampler_config(self):
        with self.assertRaises(ValidationError):
            SamplerConfig(guidance=-1.0)
        with self.assertRaises(ValidationError):
            SamplerConfig(sampling_steps=0)
        with self.assertRaises(ValueError):
            SamplerConfig(renoise="sideways")


class TestDenoiserLoss(unittest.TestCase):
    """Test cases for the training objective of the denoiser."""

    def setUp(self):
        """Tiny float64 denoiser: 2 layers, width 16, M = 4"""
        torch.manual_seed(3)
        self.model = tiny_denoiser().double()
        self.model.train()
        self.schedule = make_schedule(50)
        gen = torch.Generator().manual_seed(4)
        self.x0 = torch.randn(3, 12, generator=gen, dtype=torch.float64)
        self.eps = torch.randn(3, 12, generator=gen, dtype=torch.float64)
        self.pose = torch.randn(3, 11, generator=gen, dtype=torch.float64)
        self.n = torch.tensor([1, 25, 50])
        self.prompts = [PROMPTS[0], PROMPTS[1], ""]
        self.text_mask = torch.tensor([False, True, False])
        self.pose_mask = torch.tensor([False, False, True])

    def loss(self) -> torch.Tensor:
        return denoiser_loss(self.model, self.schedule, self.x0, self.n, self.eps, self.prompts, self.pose,
                             self.text_mask, self.pose_mask)

    def test_plain_mse(self):
        with torch.no_grad():
            x_n = q_sample(self.x0, self.n, self.eps, self.schedule)
            predicted = self.model(x_n, self.n, self.prompts, self.pose, self.text_mask, self.pose_mask)
            expected = np.mean((self.x0.numpy() - predicted.numpy()) ** 2)
            self.assertAlmostEqual(float(self.loss()), float(expected), delta=1e-9)

    def test_gradient_matches_finite_differences(self):
        self.model.zero_grad()
        self.loss().backward()
        eps = 1e-6
        with torch.no_grad():
            for name, param in self.model.named_parameters():
                if param.grad is None:
                    continue
                analytic = param.grad.clone().reshape(-1)
                flat = param.view(-1)
                for i in range(flat.numel()):
                    saved = flat[i].item()
                    flat[i] = saved + eps
                    up = self.loss().item()
                    flat[i] = saved - eps
                    down = self.loss().item()
                    flat[i] = saved
                    numeric = (up - down) / (2 * eps)
                    self.assertLessEqual(abs(numeric - analytic[i].item()),
                                         1e-4 * max(abs(numeric), abs(analytic[i].item())) + 1e-7,
                                         msg=f"{name}[{i}]")

    def test_vector_size_checked(self):
        with self.assertRaises(StructuralError):
            self.model(torch.zeros(1, 9, dtype=torch.float64), torch.tensor([1]), ["x"])


class TestTrainDenoiser(unittest.TestCase):
    """Test cases for train_denoiser and the saved model stack."""

    def setUp(self):
        """Tiny codec and denoiser over a small annotated corpus"""
        torch.manual_seed(0)
        self.tmp = tempfile.TemporaryDirectory()
        self.clips = []
        for clip in synth_corpus(CorpusConfig(count_per_family=2), seed=12).clips:
            self.clips.append(clip.copy(t_s=clip.metadata["gt_t_s"], t_e=clip.metadata["gt_t_e"]))
        self.pools = [[SegmentAnnotation(c.t_s, c.t_e, 0.0), SegmentAnnotation(c.t_s + 1, c.t_e, 0.1)]
                      for c in self.clips]
        self.codec = PhaseCodec(default_humanoid(), AutoencoderConfig(
            num_phases=4, f_max=3, window=8, conv_channels=4, hidden=8, decoder_hidden=8))
        self.config = DenoiserConfig(width=16, layers=1, heads=2, num_steps=10, epochs=2, batch_size=4)

    def tearDown(self):
        self.tmp.cleanup()

    def test_training_and_sampling(self):
        epochs = []
        stack, log = train_denoiser(self.clips, self.pools, self.codec, self.config, seed=1,
                                    on_epoch=lambda e, loss, lr: epochs.append(e))
        self.assertEqual(epochs, [0, 1])
        self.assertTrue(all(np.isfinite(log.losses)))
        periods = sorted(c.t_e - c.t_s for c in self.clips)
        self.assertEqual(stack.period_frames, int(np.median(periods)))
        heights = [c.root_positions[c.t_s - 1, 1] for c in self.clips]
        self.assertAlmostEqual(stack.root_height, float(np.median(heights)), places=12)

        params = stack.sample(self.clips[0].text, self.clips[0].pose(0), SamplerConfig(seed=3))
        self.assertEqual(params.num_phases, 4)
        self.assertEqual(stack.diffusion_calls, 1)
        self.assertEqual(stack.run_log[0]["pose"], True)

    def test_learning_rate_decays_exponentially(self):
        rates = []
        config = DenoiserConfig(width=16, layers=1, heads=2, num_steps=10, epochs=3, batch_size=4,
                                lr_start=1e-3, lr_end=1e-5)
        _, log = train_denoiser(self.clips, self.pools, self.codec, config, seed=1,
                                on_epoch=lambda e, loss, lr: rates.append(lr))
        np.testing.assert_allclose(log.learning_rates, [1e-3, 1e-4, 1e-5], rtol=1e-9)
        self.assertEqual(rates, log.learning_rates)

    def test_save_and_load(self):
        stack, _ = train_denoiser(self.clips, self.pools, self.codec, DenoiserConfig(
            width=16, layers=1, heads=2, num_steps=10, epochs=1, batch_size=4, lambda_dec=0.0), seed=2)
        path = stack.save(os.path.join(self.tmp.name, "denoiser"))
        loaded = DiffusionStack.load(path)
        sampler = SamplerConfig(seed=7)
        np.testing.assert_array_equal(loaded.sample("a person walks forward", None, sampler).to_matrix(),
                                      stack.sample("a person walks forward", None, sampler).to_matrix())
        self.assertEqual(loaded.period_frames, stack.period_frames)
        self.assertEqual(loaded.codec.freqs, self.codec.freqs)

    def test_pool_count_mismatch(self):
        with self.assertRaises(ValidationError):
            train_denoiser(self.clips, self.pools[:-1], self.codec, self.config, seed=1)

    def test_load_wrong_kind(self):
        path = self.codec.save(os.path.join(self.tmp.name, "codec"))
        with self.assertRaises(CheckpointError):
            DiffusionStack.load(path)

    def test_scaler_round_trip(self):
        vectors = np.random.default_rng(0).normal(size=(10, 6))
        scaler = ParamScaler.fit(vectors)
        np.testing.assert_allclose(scaler.inverse(scaler.transform(vectors)), vectors, atol=1e-12)
        np.testing.assert_allclose(scaler.transform(vectors).mean(axis=0), 0.0, atol=1e-12)


if __name__ == '__main__':
    unittest.main()
