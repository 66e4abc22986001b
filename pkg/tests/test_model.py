"""Model pipeline: encoder, reparameterization, conditioning variants, decoder,
generation, and the end-to-end reconstruct path."""

import numpy as np
import pytest

from reactionmamba import numerics as nm
from reactionmamba.errors import ConfigError, ShapeError, UsageError
from reactionmamba.model import ModelConfig, MotionSequence, ReactionModel
from reactionmamba.numerics import Tensor, grad_check


def tiny_config(**kw):
    base = dict(
        joint_count=2, d_model=16, d_z=8, d_intermediate=24, d_c=4,
        n_layers=2, n_state=4, seed=0,
    )
    base.update(kw)
    return ModelConfig(**base)


def random_motion(rng, t, k, fps=30):
    return MotionSequence(frames=rng.standard_normal((t, 3 * k)).astype(np.float32),
                          fps=fps, joint_count=k)


class TestMotionSequence:
    def test_joint_count_inferred(self):
        m = MotionSequence(frames=np.zeros((4, 9)))
        assert m.joint_count == 3 and m.t == 4 and m.d == 9

    def test_width_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            MotionSequence(frames=np.zeros((4, 8)), joint_count=3)

    def test_non_finite_rejected(self):
        bad = np.zeros((2, 6))
        bad[1, 3] = np.inf
        with pytest.raises(ShapeError):
            MotionSequence(frames=bad)


class TestEncode:
    def test_reference_shapes(self):
        # k=24 (d=72), T=20 -> per-frame posterior of width 128
        config = ModelConfig(joint_count=24, n_layers=2, seed=1)
        model = ReactionModel.init(config)
        rng = np.random.default_rng(2)
        stats = model.encode(rng.standard_normal((20, 72)).astype(np.float32))
        assert stats.mu.shape == (1, 20, 128)
        assert stats.logvar.shape == (1, 20, 128)

    def test_zeroed_heads_return_bias(self):
        model = ReactionModel.init(tiny_config())
        c = model.config
        model.params["encoder.mu.w"] = Tensor(np.zeros((c.d_model, c.d_z), dtype=np.float32))
        model.params["encoder.mu.b"] = Tensor(np.arange(c.d_z, dtype=np.float32))
        rng = np.random.default_rng(3)
        stats = model.encode(rng.standard_normal((6, c.d)).astype(np.float32))
        np.testing.assert_allclose(stats.mu.data[0], np.tile(np.arange(c.d_z), (6, 1)))

    def test_frame_permutation_changes_output(self):
        model = ReactionModel.init(tiny_config(seed=4))
        rng = np.random.default_rng(5)
        y = rng.standard_normal((10, 6)).astype(np.float32)
        a = model.encode(y).mu.data
        b = model.encode(y[::-1].copy()).mu.data
        assert not np.allclose(a, b)

    def test_width_mismatch_is_config_error(self):
        model = ReactionModel.init(tiny_config())
        with pytest.raises(ConfigError):
            model.encode(np.zeros((5, 9), dtype=np.float32))


class TestReparameterize:
    def test_zero_variance_returns_mu(self):
        model = ReactionModel.init(tiny_config())
        from reactionmamba.model import PosteriorStats

        mu = Tensor(np.random.default_rng(6).standard_normal((1, 4, 8)).astype(np.float32))
        stats = PosteriorStats(mu=mu, logvar=Tensor(np.full((1, 4, 8), -1e4, dtype=np.float32)))
        z = model.reparameterize(stats, np.random.default_rng(0)).z
        assert np.array_equal(z.data, mu.data)

    def test_seed_determinism(self):
        model = ReactionModel.init(tiny_config())
        from reactionmamba.model import PosteriorStats

        stats = PosteriorStats(
            mu=Tensor(np.zeros((1, 4, 8), dtype=np.float32)),
            logvar=Tensor(np.zeros((1, 4, 8), dtype=np.float32)),
        )
        z1 = model.reparameterize(stats, np.random.default_rng(7)).z.data
        z2 = model.reparameterize(stats, np.random.default_rng(7)).z.data
        assert np.array_equal(z1, z2)

    def test_monte_carlo_mean(self):
        model = ReactionModel.init(tiny_config())
        from reactionmamba.model import PosteriorStats

        n = 100_000
        mu_val, sigma = 0.7, 1.3
        stats = PosteriorStats(
            mu=Tensor(np.full((n, 1, 1), mu_val, dtype=np.float32)),
            logvar=Tensor(np.full((n, 1, 1), 2 * np.log(sigma), dtype=np.float32)),
        )
        z = model.reparameterize(stats, np.random.default_rng(8)).z.data
        assert abs(z.mean() - mu_val) < 3 * sigma / np.sqrt(n)


class TestCondition:
    def test_s1_width(self):
        model = ReactionModel.init(ModelConfig(joint_count=2, n_layers=1, seed=9))
        rng = np.random.default_rng(10)
        cond = model.condition(
            rng.standard_normal((5, 128)).astype(np.float32),
            rng.standard_normal((5, 6)).astype(np.float32),
            rng.standard_normal(6).astype(np.float32),
        )
        assert cond.shape == (1, 5, 128 + 64 + 64)

    def test_s3_width(self):
        model = ReactionModel.init(ModelConfig(joint_count=2, n_layers=1, variant="S3", seed=9))
        rng = np.random.default_rng(11)
        cond = model.condition(
            rng.standard_normal((5, 128)).astype(np.float32),
            rng.standard_normal((5, 6)).astype(np.float32),
            rng.standard_normal(6).astype(np.float32),
        )
        assert cond.shape == (1, 5, 128 + 64)

    def test_s4_full_gate_at_frame_zero(self):
        config = tiny_config(variant="S4", gate_k0=1.0)
        model = ReactionModel.init(config)
        rng = np.random.default_rng(12)
        z = rng.standard_normal((1, 6, config.d_z)).astype(np.float32)
        actor = rng.standard_normal((6, config.d)).astype(np.float32)
        pose = rng.standard_normal(config.d).astype(np.float32)
        cond = model.condition(Tensor(z), actor, pose)
        proj = nm.linear(
            Tensor(pose.reshape(1, -1)),
            model.params["cond.gate.w"], model.params["cond.gate.b"],
        ).data[0]
        np.testing.assert_allclose(cond.data[0, 0, : config.d_z], proj, rtol=1e-5, atol=1e-7)

    def test_t_mismatch_is_usage_error(self):
        model = ReactionModel.init(tiny_config())
        rng = np.random.default_rng(13)
        with pytest.raises(UsageError):
            model.condition(
                rng.standard_normal((1, 5, 8)).astype(np.float32),
                rng.standard_normal((6, 6)).astype(np.float32),
                np.zeros(6, dtype=np.float32),
            )

    def test_s5_shapes(self):
        config = tiny_config(variant="S5")
        model = ReactionModel.init(config)
        rng = np.random.default_rng(14)
        cond = model.condition(
            rng.standard_normal((1, 5, config.d_z)).astype(np.float32),
            rng.standard_normal((5, config.d)).astype(np.float32),
            np.zeros(config.d, dtype=np.float32),
        )
        assert cond.shape == (1, 5, config.d_z + config.d_c)


class TestDecode:
    def test_output_width_is_pose_width(self):
        config = tiny_config()
        model = ReactionModel.init(config)
        rng = np.random.default_rng(15)
        out = model.decode(rng.standard_normal((1, 7, config.cond_width)).astype(np.float32))
        assert out.shape == (1, 7, 6)

    def test_zero_head_repeats_bias_pose(self):
        config = tiny_config()
        model = ReactionModel.init(config)
        bias = np.arange(config.d, dtype=np.float32) * 0.1
        model.params["decoder.head.w"] = Tensor(
            np.zeros((config.d_model, config.d), dtype=np.float32))
        model.params["decoder.head.b"] = Tensor(bias)
        rng = np.random.default_rng(16)
        out = model.decode(rng.standard_normal((1, 5, config.cond_width)).astype(np.float32))
        np.testing.assert_allclose(out.data[0], np.tile(bias, (5, 1)))

    def test_s2_attention_variant_same_shapes(self):
        config = tiny_config(variant="S2")
        model = ReactionModel.init(config)
        rng = np.random.default_rng(17)
        out = model.decode(rng.standard_normal((1, 7, config.cond_width)).astype(np.float32))
        assert out.shape == (1, 7, 6)

    def test_width_mismatch_is_config_error(self):
        model = ReactionModel.init(tiny_config())
        with pytest.raises(ConfigError):
            model.decode(np.zeros((1, 3, 99), dtype=np.float32))


class TestGenerate:
    def test_deterministic_given_seed(self):
        model = ReactionModel.init(tiny_config(seed=18))
        rng = np.random.default_rng(19)
        actor = random_motion(rng, 12, 2)
        pose = rng.standard_normal(6).astype(np.float32)
        a = model.generate(actor, pose, seed=5)
        b = model.generate(actor, pose, seed=5)
        assert np.array_equal(a.frames, b.frames)

    def test_distinct_seeds_differ(self):
        model = ReactionModel.init(tiny_config(seed=20))
        rng = np.random.default_rng(21)
        actor = random_motion(rng, 12, 2)
        pose = rng.standard_normal(6).astype(np.float32)
        a = model.generate(actor, pose, seed=1)
        b = model.generate(actor, pose, seed=2)
        assert np.abs(a.frames - b.frames).max() > 0

    def test_length_preserved(self):
        model = ReactionModel.init(tiny_config(seed=22))
        rng = np.random.default_rng(23)
        actor = random_motion(rng, 17, 2)
        out = model.generate(actor, np.zeros(6, dtype=np.float32), seed=0)
        assert out.t == 17 and out.d == 6


class TestGenerateLong:
    def test_single_window_equals_generate(self):
        model = ReactionModel.init(tiny_config(seed=24))
        rng = np.random.default_rng(25)
        actor = random_motion(rng, 10, 2)
        pose = rng.standard_normal(6).astype(np.float32)
        short = model.generate(actor, pose, seed=3)
        long = model.generate_long(actor, pose, window=10, seed=3)
        assert np.array_equal(short.frames, long.frames)

    def test_thousand_frames_in_fifty_windows(self):
        model = ReactionModel.init(tiny_config(seed=26))
        rng = np.random.default_rng(27)
        actor = random_motion(rng, 1000, 2)
        out = model.generate_long(actor, np.zeros(6, dtype=np.float32), window=20, seed=0)
        assert out.t == 1000
        assert np.all(np.isfinite(out.frames))

    def test_window_larger_than_actor_rejected(self):
        model = ReactionModel.init(tiny_config())
        actor = random_motion(np.random.default_rng(28), 8, 2)
        with pytest.raises(UsageError):
            model.generate_long(actor, np.zeros(6, dtype=np.float32), window=9, seed=0)


class TestReconstruct:
    def test_shapes_round_trip(self):
        model = ReactionModel.init(tiny_config(seed=29))
        rng = np.random.default_rng(30)
        y = rng.standard_normal((2, 9, 6)).astype(np.float32)
        x = rng.standard_normal((2, 9, 6)).astype(np.float32)
        pose = y[:, 0, :]
        pred, stats = model.reconstruct(y, x, pose, np.random.default_rng(0))
        assert pred.shape == (2, 9, 6)
        assert stats.mu.shape == (2, 9, 8)

    def test_gradient_reaches_encoder(self):
        model = ReactionModel.init(tiny_config(seed=31))
        rng = np.random.default_rng(32)
        y = rng.standard_normal((1, 6, 6)).astype(np.float32)
        x = rng.standard_normal((1, 6, 6)).astype(np.float32)
        pred, stats = model.reconstruct(y, x, y[:, 0, :], np.random.default_rng(1))
        diff = nm.add(pred, Tensor(-y))
        nm.mean(nm.mul(diff, diff)).backward()
        grad = model.params["encoder.embed.w"].grad
        assert grad is not None and np.linalg.norm(grad) > 0


class TestVariantConsistency:
    def test_s1_equals_s3_with_zeroed_init_path(self):
        """With the init-pose projection zeroed and the decoder entry weights
        carved to match, S1 and S3 compute the same function."""
        c1 = tiny_config(seed=33, variant="S1")
        m1 = ReactionModel.init(c1)
        c3 = tiny_config(seed=34, variant="S3")
        m3 = ReactionModel.init(c3)
        # copy shared params from m1 into m3
        for name, p in m1.params.items():
            if name in m3.params and m3.params[name].data.shape == p.data.shape:
                m3.params[name] = p
        m3.enc_blocks, m3.dec_blocks = m1.enc_blocks, m1.dec_blocks
        # S1's extra conditioning columns: zero their projection and carve mlp1
        zdim = c1.d_z + c1.d_c
        m1.params["cond.init.w"] = Tensor(np.zeros_like(m1.params["cond.init.w"].data))
        m1.params["cond.init.b"] = Tensor(np.zeros_like(m1.params["cond.init.b"].data))
        m3.params["decoder.mlp1.w"] = Tensor(m1.params["decoder.mlp1.w"].data[:zdim].copy())
        m3.params["decoder.mlp1.b"] = m1.params["decoder.mlp1.b"]

        rng = np.random.default_rng(35)
        z = rng.standard_normal((1, 5, c1.d_z)).astype(np.float32)
        actor = rng.standard_normal((5, c1.d)).astype(np.float32)
        pose = rng.standard_normal(c1.d).astype(np.float32)
        out1 = m1.decode(m1.condition(Tensor(z), actor, pose)).data
        out3 = m3.decode(m3.condition(Tensor(z), actor, pose)).data
        np.testing.assert_allclose(out1, out3, atol=1e-6)

    def test_init_pose_sensitivity(self):
        rng = np.random.default_rng(36)
        z = rng.standard_normal((1, 5, 8)).astype(np.float32)
        actor = rng.standard_normal((5, 6)).astype(np.float32)
        p1, p2 = (rng.standard_normal(6).astype(np.float32) for _ in range(2))

        m1 = ReactionModel.init(tiny_config(seed=37, variant="S1"))
        a = m1.decode(m1.condition(Tensor(z), actor, p1)).data
        b = m1.decode(m1.condition(Tensor(z), actor, p2)).data
        assert np.abs(a - b).max() > 0

        m3 = ReactionModel.init(tiny_config(seed=38, variant="S3"))
        a = m3.decode(m3.condition(Tensor(z), actor, p1)).data
        b = m3.decode(m3.condition(Tensor(z), actor, p2)).data
        np.testing.assert_array_equal(a, b)


class TestModelGradients:
    def test_full_encoder_matches_finite_differences(self):
        config = ModelConfig(
            joint_count=1, d_model=6, d_z=3, d_intermediate=8, d_c=2,
            n_layers=2, n_state=3, seed=39, dtype="float64",
        )
        model = ReactionModel.init(config)
        rng = np.random.default_rng(40)
        y = Tensor(rng.standard_normal((1, 4, 3)), requires_grad=True)
        err = grad_check(lambda v: nm.mean(model.encode(v).mu), y)
        assert err < 1e-3

    def test_full_decoder_matches_finite_differences(self):
        config = ModelConfig(
            joint_count=1, d_model=6, d_z=3, d_intermediate=8, d_c=2,
            n_layers=2, n_state=3, seed=41, dtype="float64",
        )
        model = ReactionModel.init(config)
        rng = np.random.default_rng(42)
        cond = Tensor(rng.standard_normal((1, 4, config.cond_width)), requires_grad=True)
        err = grad_check(lambda v: nm.mean(model.decode(v)), cond)
        assert err < 1e-3
