"""State-space sequence core.

Two equivalent views of the time-invariant system
    h_t = Abar h_{t-1} + Bbar u_t,   v_t = C h_t
are implemented: the sequential recurrence and the causal convolution with
the structured kernel K = (C Bbar, C Abar Bbar, ..., C Abar^{M-1} Bbar).
On top of them sit the input-dependent (selective) scan, the Mamba-style
block, and the causal self-attention block used as an ablation swap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import numerics as nm
from .errors import DomainError, NumericError, ShapeError, UnsupportedModeError
from .numerics import Tensor


# -- time-invariant system ---------------------------------------------------------


@dataclass
class SSMParams:
    """Continuous-time parameters of a single-input single-output SSM.

    a: (N, N) state transition, b: (N, 1) input projection, c: (1, N)
    output projection. delta is the discretization step: a positive scalar
    in time-invariant mode, or a length-T positive array in selective mode
    (which the kernel builder rejects).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    delta: float | np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1, 1)
        self.c = np.asarray(self.c, dtype=np.float64).reshape(1, -1)
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ShapeError(f"state matrix must be square, got {self.a.shape}")
        if self.b.shape[0] != n or self.c.shape[1] != n:
            raise ShapeError(
                f"projection shapes {self.b.shape}/{self.c.shape} do not match state size {n}"
            )

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def is_selective(self) -> bool:
        return np.ndim(self.delta) > 0


def discretize(a: np.ndarray, b: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization.

    Abar = exp(delta a); Bbar = (delta a)^{-1} (exp(delta a) - I) delta b,
    falling back to the Euler form Bbar = delta b when ||delta a|| < 1e-8.
    """
    delta = float(delta)
    if delta <= 0:
        raise DomainError(f"step size must be positive, got {delta}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 1)
    da = delta * a
    abar = scipy.linalg.expm(da)
    if np.linalg.norm(da) < 1e-8:
        bbar = delta * b
    else:
        # solve (delta a) X = (Abar - I) delta b; exact for invertible delta*a
        bbar = np.linalg.solve(da, (abar - np.eye(a.shape[0])) @ (delta * b))
    return abar, bbar


def ssm_scan_recurrent(u: np.ndarray, params: SSMParams, dtype=np.float64) -> np.ndarray:
    """Run the discretized recurrence over a scalar input sequence.

    Strictly causal: v_t depends only on u_1..u_t, with h_0 = 0. dtype selects
    the arithmetic precision (float32 matches inference, float64 verification).
    """
    if params.is_selective:
        raise UnsupportedModeError("recurrent scan over SSMParams requires a scalar step size")
    u = np.asarray(u, dtype=dtype).reshape(-1)
    abar, bbar = discretize(params.a, params.b, params.delta)
    abar = abar.astype(dtype)
    bbar = bbar.astype(dtype)
    c = params.c.astype(dtype)
    h = np.zeros((params.n, 1), dtype=dtype)
    v = np.empty(u.shape[0], dtype=dtype)
    for t in range(u.shape[0]):
        h = abar @ h + bbar * u[t]
        if not np.all(np.isfinite(h)):
            raise NumericError(f"state diverged at timestep {t}")
        v[t] = (c @ h).item()
    return v


def ssm_conv_kernel(params: SSMParams, m: int, dtype=np.float64) -> np.ndarray:
    """Structured kernel K_j = C Abar^j Bbar for j = 0..m-1 (time-invariant only)."""
    if params.is_selective:
        raise UnsupportedModeError("convolutional kernel exists only for time-invariant parameters")
    if m < 1:
        raise DomainError(f"kernel length must be >= 1, got {m}")
    abar, bbar = discretize(params.a, params.b, params.delta)
    abar = abar.astype(dtype)
    c = params.c.astype(dtype)
    k = np.empty(m, dtype=dtype)
    w = bbar.astype(dtype)
    for j in range(m):
        k[j] = (c @ w).item()
        w = abar @ w
    return k


def ssm_conv_apply(u: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Causal convolution v_t = sum_{j<=min(t, M-1)} K_j u_{t-j}.

    Arithmetic follows the dtype of the inputs (float32 stays float32)."""
    u = np.asarray(u).reshape(-1)
    k = np.asarray(k).reshape(-1)
    if not np.issubdtype(u.dtype, np.floating):
        u = u.astype(np.float64)
    if not np.issubdtype(k.dtype, np.floating):
        k = k.astype(np.float64)
    if k.shape[0] > u.shape[0]:
        raise DomainError(f"kernel length {k.shape[0]} exceeds sequence length {u.shape[0]}")
    return np.convolve(u, k)[: u.shape[0]]


# -- selective (input-dependent) scan ------------------------------------------------


def _selective_scan_op(
    u: Tensor, delta: Tensor, b_t: Tensor, c_t: Tensor, a: Tensor
) -> Tensor:
    """Channelwise diagonal recurrence with per-step parameters.

    Shapes: u, delta (B, T, D); b_t, c_t (B, T, N); a (D, N) with negative
    real entries. Per step:
        h_t = exp(delta_t * a) * h_{t-1} + delta_t * b_t * u_t
        y_t[d] = sum_n c_t[n] * h_t[d, n]
    Implemented as a single autodiff node with a hand-written backward pass
    (the reverse recurrence), which keeps the graph small and the scan fast.
    """
    bsz, seq, dim = u.data.shape
    n = b_t.data.shape[-1]
    dtype = u.data.dtype

    needs_grad = any(p.requires_grad for p in (u, delta, b_t, c_t, a))
    if needs_grad:
        # precompute the per-step factors in one pass; the backward reuses them
        with np.errstate(all="ignore"):
            da = np.exp(delta.data[..., None] * a.data[None, None])  # (B, T, D, N)
            dbu = delta.data[..., None] * b_t.data[:, :, None, :] * u.data[..., None]

        def step_factors(t):
            return da[:, t], dbu[:, t]
    else:
        # inference path: constant working set per step keeps timing linear in T
        def step_factors(t):
            da_t = np.exp(delta.data[:, t, :, None] * a.data[None])
            dbu_t = delta.data[:, t, :, None] * b_t.data[:, t, None, :] * u.data[:, t, :, None]
            return da_t, dbu_t

    h_all = np.empty((bsz, seq, dim, n), dtype=dtype) if needs_grad else None
    h = np.zeros((bsz, dim, n), dtype=dtype)
    y = np.empty((bsz, seq, dim), dtype=dtype)
    with np.errstate(all="ignore"):
        for t in range(seq):
            da_t, dbu_t = step_factors(t)
            h = da_t * h + dbu_t
            if not np.all(np.isfinite(h)):
                raise NumericError(f"selective scan state diverged at timestep {t}")
            if h_all is not None:
                h_all[:, t] = h
            y[:, t] = np.einsum("bdn,bn->bd", h, c_t.data[:, t])

    def backward(gy):
        gu = np.zeros_like(u.data)
        gdelta = np.zeros_like(delta.data)
        gb = np.zeros_like(b_t.data)
        gc = np.zeros_like(c_t.data)
        ga = np.zeros_like(a.data)
        gh = np.zeros((bsz, dim, n), dtype=dtype)
        for t in range(seq - 1, -1, -1):
            gc[:, t] = np.einsum("bd,bdn->bn", gy[:, t], h_all[:, t])
            gh += gy[:, t, :, None] * c_t.data[:, t, None, :]
            h_prev = h_all[:, t - 1] if t > 0 else 0.0
            g_da = gh * h_prev
            # d exp(delta a)/d delta = a exp(delta a); /d a = delta exp(delta a)
            gdelta[:, t] += np.einsum("bdn,dn->bd", g_da * da[:, t], a.data)
            ga += np.einsum("bdn->dn", g_da * da[:, t] * delta.data[:, t, :, None])
            # d(delta b u) terms
            gdelta[:, t] += np.einsum("bdn,bn->bd", gh * u.data[:, t, :, None], b_t.data[:, t])
            gb[:, t] = np.einsum("bdn,bd->bn", gh, delta.data[:, t] * u.data[:, t])
            gu[:, t] += np.einsum("bdn,bn->bd", gh, b_t.data[:, t]) * delta.data[:, t]
            gh = gh * da[:, t]
        if u.requires_grad:
            u._accumulate(gu)
        if delta.requires_grad:
            delta._accumulate(gdelta)
        if b_t.requires_grad:
            b_t._accumulate(gb)
        if c_t.requires_grad:
            c_t._accumulate(gc)
        if a.requires_grad:
            a._accumulate(ga)

    return Tensor._from_op(y, (u, delta, b_t, c_t, a), backward, "selective_scan")


def causal_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Depthwise causal convolution over time.

    x (B, T, D), weight (W, D): y[:, t, d] = sum_j weight[j, d] x[:, t-j, d].
    Frames before the sequence start contribute zero; no future frame is read.
    """
    width = weight.data.shape[0]
    out = np.zeros_like(x.data)
    for j in range(width):
        if j == 0:
            out += weight.data[0] * x.data
        else:
            out[:, j:, :] += weight.data[j] * x.data[:, :-j, :]
    if bias is not None:
        out = out + bias.data

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for j in range(width):
                if j == 0:
                    gx += weight.data[0] * g
                else:
                    gx[:, :-j, :] += weight.data[j] * g[:, j:, :]
            x._accumulate(gx)
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            for j in range(width):
                if j == 0:
                    gw[0] = (x.data * g).sum(axis=(0, 1))
                else:
                    gw[j] = (x.data[:, :-j, :] * g[:, j:, :]).sum(axis=(0, 1))
            weight._accumulate(gw)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 1)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "causal_conv1d")


# -- blocks ------------------------------------------------------------------------


@dataclass
class MambaBlockParams:
    """Parameters for one Mamba-style block (SSM mixer + gated MLP)."""

    norm_scale: Tensor
    w_in: Tensor  # (d_model, 2 * d_inner): SSM stream and gate stream
    conv_w: Tensor  # (conv_width, d_inner) depthwise causal conv
    conv_b: Tensor
    w_x: Tensor  # (d_inner, dt_rank + 2 n) selective heads
    b_x: Tensor
    w_dt: Tensor  # (dt_rank, d_inner) step-size head
    b_dt: Tensor
    a_log: Tensor  # (d_inner, n); dynamics a = -exp(a_log)
    w_out: Tensor  # (d_inner, d_model)
    mlp_norm_scale: Tensor
    w_gate: Tensor
    w_up: Tensor
    w_down: Tensor
    n_state: int = 16
    dt_rank: int = 1

    @property
    def d_inner(self) -> int:
        return self.w_out.data.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        fields = (
            "norm_scale w_in conv_w conv_b w_x b_x w_dt b_dt a_log w_out "
            "mlp_norm_scale w_gate w_up w_down"
        ).split()
        return {f"{prefix}.{name}": getattr(self, name) for name in fields}


@dataclass
class AttentionBlockParams:
    """Parameters for the attention swap-in block (same wiring as the Mamba block)."""

    norm_scale: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_out: Tensor
    mlp_norm_scale: Tensor
    w_gate: Tensor
    w_up: Tensor
    w_down: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        fields = "norm_scale w_q w_k w_v w_out mlp_norm_scale w_gate w_up w_down".split()
        return {f"{prefix}.{name}": getattr(self, name) for name in fields}


def _softplus_inverse(y: np.ndarray) -> np.ndarray:
    return np.log(np.expm1(y))


def init_mamba_block(
    d_model: int,
    n_state: int,
    rng: np.random.Generator,
    d_intermediate: int | None = None,
    expand: int = 2,
    conv_width: int = 4,
    dtype=np.float32,
) -> MambaBlockParams:
    """Initialize one block. Dynamics magnitudes are log-spaced in [1, n_state]
    and the step-size bias targets steps in [1e-3, 1e-1], keeping the scan
    stable at initialization."""
    d_inner = expand * d_model
    d_intermediate = d_intermediate or 2 * d_model
    dt_rank = max(1, d_model // 16)

    def w(shape, scale=None):
        scale = scale if scale is not None else 1.0 / np.sqrt(shape[0])
        return Tensor((rng.standard_normal(shape) * scale).astype(dtype), requires_grad=True)

    a_mag = np.geomspace(1.0, n_state, n_state)
    a_log = np.log(np.broadcast_to(a_mag, (d_inner, n_state)).copy())
    dt_target = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=d_inner))
    return MambaBlockParams(
        norm_scale=Tensor(np.ones(d_model, dtype=dtype), requires_grad=True),
        w_in=w((d_model, 2 * d_inner)),
        conv_w=w((conv_width, d_inner), scale=1.0 / np.sqrt(conv_width)),
        conv_b=Tensor(np.zeros(d_inner, dtype=dtype), requires_grad=True),
        w_x=w((d_inner, dt_rank + 2 * n_state)),
        b_x=Tensor(np.zeros(dt_rank + 2 * n_state, dtype=dtype), requires_grad=True),
        w_dt=w((dt_rank, d_inner), scale=dt_rank**-0.5),
        b_dt=Tensor(_softplus_inverse(dt_target).astype(dtype), requires_grad=True),
        a_log=Tensor(a_log.astype(dtype), requires_grad=True),
        w_out=w((d_inner, d_model)),
        mlp_norm_scale=Tensor(np.ones(d_model, dtype=dtype), requires_grad=True),
        w_gate=w((d_model, d_intermediate)),
        w_up=w((d_model, d_intermediate)),
        w_down=w((d_intermediate, d_model)),
        n_state=n_state,
        dt_rank=dt_rank,
    )


def init_attention_block(
    d_model: int,
    rng: np.random.Generator,
    d_intermediate: int | None = None,
    dtype=np.float32,
) -> AttentionBlockParams:
    d_intermediate = d_intermediate or 2 * d_model

    def w(shape):
        return Tensor(
            (rng.standard_normal(shape) / np.sqrt(shape[0])).astype(dtype), requires_grad=True
        )

    return AttentionBlockParams(
        norm_scale=Tensor(np.ones(d_model, dtype=dtype), requires_grad=True),
        w_q=w((d_model, d_model)),
        w_k=w((d_model, d_model)),
        w_v=w((d_model, d_model)),
        w_out=w((d_model, d_model)),
        mlp_norm_scale=Tensor(np.ones(d_model, dtype=dtype), requires_grad=True),
        w_gate=w((d_model, d_intermediate)),
        w_up=w((d_model, d_intermediate)),
        w_down=w((d_intermediate, d_model)),
    )


def selective_scan(u: Tensor, block: MambaBlockParams) -> Tensor:
    """Input-dependent scan: step sizes, input and output projections are all
    linear functions of the current input, with softplus keeping the step
    positive."""
    proj = nm.linear(u, block.w_x, block.b_x)
    dt_raw, b_t, c_t = nm.split(proj, [block.dt_rank, block.dt_rank + block.n_state], axis=-1)
    delta = nm.softplus(nm.linear(dt_raw, block.w_dt, block.b_dt))
    a = nm.mul(nm.exp(block.a_log), -1.0)
    return _selective_scan_op(u, delta, b_t, c_t, a)


def _ensure_batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.data.ndim == 2:
        return nm.reshape(x, (1, *x.data.shape)), True
    return x, False


def mamba_block(
    x: Tensor, residual: Tensor | None, block: MambaBlockParams
) -> tuple[Tensor, Tensor]:
    """One block: fused residual-add + RMS norm, the SSM mixer pipeline
    (in-projection, causal short conv, silu, selective scan, silu-gate,
    out-projection), then a gated MLP behind its own fused residual + norm.

    Returns (block output, updated residual stream); the effective stream
    value entering the next block is output + residual.
    """
    x, squeezed = _ensure_batched(x)
    if residual is not None:
        residual, _ = _ensure_batched(residual)
        residual = nm.add(x, residual)
    else:
        residual = x
    h = nm.rmsnorm(residual, block.norm_scale, eps=1e-6)
    d_inner = block.d_inner
    xz = nm.linear(h, block.w_in)
    xs, z = nm.split(xz, [d_inner], axis=-1)
    xs = causal_conv1d(xs, block.conv_w, block.conv_b)
    xs = nm.silu(xs)
    y = selective_scan(xs, block)
    y = nm.mul(y, nm.silu(z))
    y = nm.linear(y, block.w_out)

    residual = nm.add(y, residual)
    h2 = nm.rmsnorm(residual, block.mlp_norm_scale, eps=1e-6)
    out = nm.gated_mlp(h2, {"w_gate": block.w_gate, "w_up": block.w_up, "w_down": block.w_down})
    if squeezed:
        out = nm.reshape(out, out.data.shape[1:])
        residual = nm.reshape(residual, residual.data.shape[1:])
    return out, residual


def causal_self_attention(h: Tensor, block: AttentionBlockParams) -> Tensor:
    """Single-head causal self-attention: softmax(QK^T / sqrt(d)) V."""
    d = h.data.shape[-1]
    t = h.data.shape[-2]
    q = nm.linear(h, block.w_q)
    k = nm.linear(h, block.w_k)
    v = nm.linear(h, block.w_v)
    scores = nm.mul(nm.matmul(q, nm.swapaxes(k, -1, -2)), 1.0 / np.sqrt(d))
    mask = np.triu(np.full((t, t), -1e9, dtype=h.data.dtype), k=1)
    scores = nm.add(scores, Tensor(mask))
    att = nm.softmax(scores, axis=-1)
    return nm.linear(nm.matmul(att, v), block.w_out)


def attention_block(
    x: Tensor, residual: Tensor | None, block: AttentionBlockParams
) -> tuple[Tensor, Tensor]:
    """Attention swap-in with the same residual/norm wiring as mamba_block."""
    x, squeezed = _ensure_batched(x)
    if residual is not None:
        residual, _ = _ensure_batched(residual)
        residual = nm.add(x, residual)
    else:
        residual = x
    h = nm.rmsnorm(residual, block.norm_scale, eps=1e-6)
    y = causal_self_attention(h, block)
    residual = nm.add(y, residual)
    h2 = nm.rmsnorm(residual, block.mlp_norm_scale, eps=1e-6)
    out = nm.gated_mlp(h2, {"w_gate": block.w_gate, "w_up": block.w_up, "w_down": block.w_down})
    if squeezed:
        out = nm.reshape(out, out.data.shape[1:])
        residual = nm.reshape(residual, residual.data.shape[1:])
    return out, residual
