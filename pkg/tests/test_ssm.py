"""SSM core: discretization, scan/kernel equivalence, selective scan, blocks."""

import math

import numpy as np
import pytest

from reactionmamba import numerics as nm
from reactionmamba.errors import DomainError, NumericError, UnsupportedModeError
from reactionmamba.numerics import Tensor, grad_check
from reactionmamba import ssm
from reactionmamba.ssm import (
    AttentionBlockParams,
    MambaBlockParams,
    SSMParams,
    attention_block,
    causal_conv1d,
    causal_self_attention,
    discretize,
    init_attention_block,
    init_mamba_block,
    mamba_block,
    selective_scan,
    ssm_conv_apply,
    ssm_conv_kernel,
    ssm_scan_recurrent,
)


def stable_params(rng, n=None, t_invariant=True):
    """Random stable system: A = -lam*I + skew, eigenvalues -lam + i*omega."""
    n = n or int(rng.integers(1, 17))
    lam = float(rng.uniform(0.05, 2.0))
    s = rng.standard_normal((n, n))
    a = -lam * np.eye(n) + (s - s.T) / 2.0
    b = rng.uniform(-1.0, 1.0, size=(n, 1))
    c = rng.uniform(-1.0, 1.0, size=(1, n))
    delta = float(rng.uniform(0.05, 1.0))
    return SSMParams(a=a, b=b, c=c, delta=delta)


class TestDiscretize:
    def test_zero_dynamics_limit(self):
        abar, bbar = discretize(np.zeros((1, 1)), np.ones((1, 1)), 0.1)
        np.testing.assert_allclose(abar, [[1.0]])
        np.testing.assert_allclose(bbar, [[0.1]])

    def test_scalar_exponential(self):
        abar, _ = discretize(np.array([[-1.0]]), np.ones((1, 1)), math.log(2.0))
        np.testing.assert_allclose(abar, [[0.5]], rtol=1e-12)

    def test_diagonal_exponential(self):
        abar, _ = discretize(np.diag([-1.0, -2.0]), np.ones((2, 1)), 1.0)
        np.testing.assert_allclose(abar, np.diag([math.exp(-1.0), math.exp(-2.0)]), rtol=1e-12)

    def test_nonpositive_delta_rejected(self):
        with pytest.raises(DomainError):
            discretize(np.eye(1), np.ones((1, 1)), 0.0)


class TestRecurrentScan:
    def hand_params(self):
        # a=-1, delta=ln2 gives Abar=0.5; b=2 makes Bbar exactly 1
        return SSMParams(a=[[-1.0]], b=[[2.0]], c=[[1.0]], delta=math.log(2.0))

    def test_hand_recurrence(self):
        v = ssm_scan_recurrent([1.0, 0.0, 0.0], self.hand_params())
        np.testing.assert_allclose(v, [1.0, 0.5, 0.25], rtol=1e-12)

    def test_zero_readout(self):
        params = SSMParams(a=[[-1.0]], b=[[2.0]], c=[[0.0]], delta=0.3)
        v = ssm_scan_recurrent(np.random.default_rng(0).standard_normal(16), params)
        np.testing.assert_allclose(v, 0.0)

    def test_zero_input(self):
        v = ssm_scan_recurrent(np.zeros(8), self.hand_params())
        np.testing.assert_allclose(v, 0.0)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        params = stable_params(rng, n=6)
        u1, u2 = rng.standard_normal(64), rng.standard_normal(64)
        alpha, beta = 1.7, -0.4
        lhs = ssm_scan_recurrent(alpha * u1 + beta * u2, params)
        rhs = alpha * ssm_scan_recurrent(u1, params) + beta * ssm_scan_recurrent(u2, params)
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)


class TestConvKernel:
    def test_hand_powers(self):
        params = SSMParams(a=[[-1.0]], b=[[2.0]], c=[[1.0]], delta=math.log(2.0))
        np.testing.assert_allclose(ssm_conv_kernel(params, 3), [1.0, 0.5, 0.25], rtol=1e-12)

    def test_nilpotent_one_step_memory(self):
        # Abar ~ 0 via a strongly negative pole: only the first tap survives
        params = SSMParams(a=[[-200.0]], b=[[1.0]], c=[[3.0]], delta=1.0)
        k = ssm_conv_kernel(params, 4)
        assert abs(k[0]) > 0
        np.testing.assert_allclose(k[1:], 0.0, atol=1e-12)

    def test_degenerate_length(self):
        params = SSMParams(a=[[-1.0]], b=[[2.0]], c=[[1.0]], delta=math.log(2.0))
        k = ssm_conv_kernel(params, 1)
        np.testing.assert_allclose(k, [1.0], rtol=1e-12)

    def test_selective_mode_rejected(self):
        params = SSMParams(a=[[-1.0]], b=[[1.0]], c=[[1.0]], delta=np.full(8, 0.1))
        with pytest.raises(UnsupportedModeError):
            ssm_conv_kernel(params, 4)


class TestConvApply:
    def test_matches_scan_example(self):
        np.testing.assert_allclose(
            ssm_conv_apply([1.0, 0.0, 0.0], [1.0, 0.5, 0.25]), [1.0, 0.5, 0.25]
        )

    def test_identity_kernel(self):
        u = np.random.default_rng(2).standard_normal(10)
        np.testing.assert_allclose(ssm_conv_apply(u, [1.0]), u)

    def test_kernel_longer_than_sequence_rejected(self):
        with pytest.raises(DomainError):
            ssm_conv_apply(np.zeros(3), np.zeros(4))

    def test_scan_conv_equivalence(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            params = stable_params(rng)
            u = rng.standard_normal(128)
            v_scan = ssm_scan_recurrent(u, params)
            v_conv = ssm_conv_apply(u, ssm_conv_kernel(params, 128))
            np.testing.assert_allclose(v_conv, v_scan, atol=1e-10)

    def test_stability_bound(self):
        rng = np.random.default_rng(4)
        params = stable_params(rng, n=8)
        u = rng.uniform(-3.0, 3.0, size=512)
        k = ssm_conv_kernel(params, 512)
        v = ssm_conv_apply(u, k)
        bound = np.abs(u).max() * np.abs(k).sum()
        assert np.abs(v).max() <= bound + 1e-9


def frozen_block(d_inner, n_state, delta_target, b_const, c_const, dtype=np.float64):
    """Block with selective heads frozen to constants (weights zeroed)."""
    rng = np.random.default_rng(0)
    block = init_mamba_block(d_inner, n_state, rng, expand=1, dtype=dtype)
    dt_rank = block.dt_rank
    z = lambda shape: Tensor(np.zeros(shape, dtype=dtype))
    block.w_x = z((d_inner, dt_rank + 2 * n_state))
    b_x = np.zeros(dt_rank + 2 * n_state, dtype=dtype)
    b_x[dt_rank : dt_rank + n_state] = b_const
    b_x[dt_rank + n_state :] = c_const
    block.b_x = Tensor(b_x)
    block.w_dt = z((dt_rank, d_inner))
    block.b_dt = Tensor(np.full(d_inner, np.log(np.expm1(delta_target)), dtype=dtype))
    return block


class TestSelectiveScan:
    def test_reduces_to_lti_scan_with_frozen_heads(self):
        # Tiny delta*a puts the ZOH discretization in its Euler regime, so the
        # per-channel recurrence and the LTI scan agree exactly.
        n, t = 3, 24
        delta, a_diag = 1e-5, np.array([-1e-4, -2e-4, -3e-4])
        b_const, c_const = np.array([0.7, -0.3, 0.5]), np.array([1.1, 0.4, -0.8])
        block = frozen_block(1, n, delta, b_const, c_const)
        block.a_log = Tensor(np.log(-a_diag)[None, :].astype(np.float64))
        rng = np.random.default_rng(5)
        u = rng.standard_normal((1, t, 1))
        y = selective_scan(Tensor(u), block).data[0, :, 0]
        ref = ssm_scan_recurrent(
            u[0, :, 0], SSMParams(a=np.diag(a_diag), b=b_const * delta / delta, c=c_const, delta=delta)
        )
        np.testing.assert_allclose(y, ref, rtol=1e-9, atol=1e-12)

    def test_zero_input_gives_zero_output(self):
        block = frozen_block(2, 3, 0.05, np.ones(3), np.ones(3))
        y = selective_scan(Tensor(np.zeros((1, 10, 2))), block)
        np.testing.assert_allclose(y.data, 0.0)

    def test_two_step_hand_recurrence(self):
        # N=1, D=1, frozen heads: h1 = d*b*u1, y1 = c*h1;
        # h2 = exp(d*a)*h1 + d*b*u2, y2 = c*h2
        delta, a, b, c = 0.2, -0.5, 1.3, 0.9
        block = frozen_block(1, 1, delta, np.array([b]), np.array([c]))
        block.a_log = Tensor(np.array([[np.log(-a)]], dtype=np.float64))
        u1, u2 = 0.8, -1.1
        y = selective_scan(Tensor(np.array([[[u1], [u2]]], dtype=np.float64)), block).data
        h1 = delta * b * u1
        h2 = math.exp(delta * a) * h1 + delta * b * u2
        np.testing.assert_allclose(y[0, :, 0], [c * h1, c * h2], rtol=1e-12)

    def test_divergence_names_timestep(self):
        block = frozen_block(1, 1, 0.1, np.array([1e18]), np.array([1.0]), dtype=np.float32)
        u = np.full((1, 4, 1), 1e30, dtype=np.float32)
        with pytest.raises(NumericError) as exc:
            selective_scan(Tensor(u), block)
        assert "timestep 0" in str(exc.value)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        block = init_mamba_block(4, 3, rng, dtype=np.float64)
        u = Tensor(rng.standard_normal((2, 5, 8)), requires_grad=True)
        assert grad_check(lambda v: nm.mean(selective_scan(v, block)), u) < 1e-3
        for name in ("a_log", "w_x", "b_x", "w_dt", "b_dt"):
            p = getattr(block, name)
            assert grad_check(lambda v: nm.mean(selective_scan(u, _swap(block, name, v))), p) < 1e-3


def _swap(block, name, value):
    import copy

    clone = copy.copy(block)
    setattr(clone, name, value)
    return clone


class TestCausalConv:
    def test_matches_direct_correlation(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 9, 3))
        w = rng.standard_normal((4, 3))
        y = causal_conv1d(Tensor(x), Tensor(w)).data
        for t in range(9):
            expect = sum(w[j] * x[:, t - j, :] for j in range(4) if t - j >= 0)
            np.testing.assert_allclose(y[:, t, :], expect, rtol=1e-5)

    def test_gradients(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.standard_normal((1, 6, 2)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal(2), requires_grad=True)
        assert grad_check(lambda v: nm.mean(causal_conv1d(v, w, b)), x) < 1e-6
        assert grad_check(lambda v: nm.mean(causal_conv1d(x, v, b)), w) < 1e-6
        assert grad_check(lambda v: nm.mean(causal_conv1d(x, w, v)), b) < 1e-6


class TestMambaBlock:
    def test_zeroed_out_projections_pass_residual_through(self):
        rng = np.random.default_rng(9)
        block = init_mamba_block(8, 4, rng)
        block.w_out = Tensor(np.zeros((block.d_inner, 8), dtype=np.float32), requires_grad=True)
        block.w_down = Tensor(np.zeros_like(block.w_down.data), requires_grad=True)
        x = Tensor(rng.standard_normal((5, 8)).astype(np.float32))
        res_in = Tensor(rng.standard_normal((5, 8)).astype(np.float32))
        y, residual = mamba_block(x, res_in, block)
        np.testing.assert_allclose(y.data, 0.0)
        np.testing.assert_allclose(residual.data, x.data + res_in.data, rtol=1e-6)

    def test_output_shape_at_model_width(self):
        rng = np.random.default_rng(10)
        block = init_mamba_block(256, 16, rng, d_intermediate=512)
        y, _ = mamba_block(Tensor(rng.standard_normal((4, 256)).astype(np.float32)), None, block)
        assert y.shape == (4, 256)

    def test_causality(self):
        rng = np.random.default_rng(11)
        block = init_mamba_block(6, 4, rng)
        x = rng.standard_normal((16, 6)).astype(np.float32)
        y1, r1 = mamba_block(Tensor(x), None, block)
        x2 = x.copy()
        x2[10] += 1.0
        y2, r2 = mamba_block(Tensor(x2), None, block)
        assert np.array_equal(y1.data[:10], y2.data[:10])
        assert np.array_equal(r1.data[:10], r2.data[:10])
        assert not np.allclose(y1.data[10:], y2.data[10:])

    def test_gradients_through_block(self):
        rng = np.random.default_rng(12)
        block = init_mamba_block(4, 3, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((1, 5, 4)), requires_grad=True)

        def f(v):
            y, residual = mamba_block(v, None, block)
            return nm.mean(nm.add(y, residual))

        assert grad_check(f, x) < 1e-3


class TestAttentionBlock:
    def test_single_token_attention_is_identity_on_values(self):
        rng = np.random.default_rng(13)
        block = init_attention_block(4, rng)
        block.w_v = Tensor(np.eye(4, dtype=np.float32))
        block.w_out = Tensor(np.eye(4, dtype=np.float32))
        h = Tensor(rng.standard_normal((1, 1, 4)).astype(np.float32))
        y = causal_self_attention(h, block)
        np.testing.assert_allclose(y.data, h.data, rtol=1e-6)

    def test_uniform_scores_give_running_mean(self):
        rng = np.random.default_rng(14)
        block = init_attention_block(4, rng)
        block.w_q = Tensor(np.zeros((4, 4), dtype=np.float32))
        block.w_k = Tensor(np.zeros((4, 4), dtype=np.float32))
        block.w_v = Tensor(np.eye(4, dtype=np.float32))
        block.w_out = Tensor(np.eye(4, dtype=np.float32))
        h = rng.standard_normal((1, 7, 4)).astype(np.float32)
        y = causal_self_attention(Tensor(h), block).data
        running_mean = np.cumsum(h[0], axis=0) / np.arange(1, 8)[:, None]
        np.testing.assert_allclose(y[0], running_mean, rtol=1e-4, atol=1e-6)

    def test_causality(self):
        rng = np.random.default_rng(15)
        block = init_attention_block(6, rng)
        x = rng.standard_normal((12, 6)).astype(np.float32)
        y1, _ = attention_block(Tensor(x), None, block)
        x2 = x.copy()
        x2[8] += 2.0
        y2, _ = attention_block(Tensor(x2), None, block)
        assert np.array_equal(y1.data[:8], y2.data[:8])

    def test_gradients_through_block(self):
        rng = np.random.default_rng(16)
        block = init_attention_block(4, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((1, 5, 4)), requires_grad=True)

        def f(v):
            y, residual = attention_block(v, None, block)
            return nm.mean(nm.add(y, residual))

        assert grad_check(f, x) < 1e-3
