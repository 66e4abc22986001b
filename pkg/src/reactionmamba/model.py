"""The reaction-generation VAE.

The encoder maps the reactor's motion to per-frame posterior statistics; a
sampled latent sequence is conditioned on a projection of the actor's motion
and of the reactor's initial pose, and the decoder maps the conditioned
sequence back to motion. Variants S1-S5 swap the conditioning and mixing
strategies for ablation studies:

    S1  latent || action projection || init-pose projection (the full model)
    S2  S1 with every state-space block replaced by causal self-attention
    S3  init-pose projection removed
    S4  init-pose injected by a gate that decays over the sequence
    S5  action injected by cross-attention instead of concatenation
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ShapeError, UsageError
from .numerics import Tensor
from .ssm import (
    AttentionBlockParams,
    attention_block,
    init_attention_block,
    init_mamba_block,
    mamba_block,
)

VARIANTS = ("S1", "S2", "S3", "S4", "S5")


@dataclass
class MotionSequence:
    """T frames of one character's skeletal motion, 3 coordinates per joint."""

    frames: np.ndarray  # (T, 3 * joint_count), float32
    fps: int = 30
    joint_count: int = 0
    skeleton_id: str = "default"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ShapeError(f"frames must be (T, d) with T >= 1, got {self.frames.shape}")
        if self.joint_count == 0:
            if self.frames.shape[1] % 3 != 0:
                raise ShapeError(f"frame width {self.frames.shape[1]} is not 3 * joint_count")
            self.joint_count = self.frames.shape[1] // 3
        elif self.frames.shape[1] != 3 * self.joint_count:
            raise ShapeError(
                f"frame width {self.frames.shape[1]} != 3 * joint_count ({self.joint_count})"
            )
        if not np.all(np.isfinite(self.frames)):
            raise ShapeError("motion frames contain non-finite values")

    @property
    def t(self) -> int:
        return self.frames.shape[0]

    @property
    def d(self) -> int:
        return self.frames.shape[1]

    def joints(self) -> np.ndarray:
        """View frames as (T, joint_count, 3)."""
        return self.frames.reshape(self.t, self.joint_count, 3)


@dataclass
class PosteriorStats:
    mu: Tensor
    logvar: Tensor


@dataclass
class LatentSequence:
    z: Tensor


@dataclass
class ModelConfig:
    """Dimensions and variant selection. Defaults mirror the reference setup:
    hidden width 256, latent width 128, MLP width 512, conditioning width 64,
    6 blocks per stack."""

    joint_count: int
    d_model: int = 256
    d_z: int = 128
    d_intermediate: int = 512
    d_c: int = 64
    n_layers: int = 6
    n_state: int = 16
    conv_width: int = 4
    expand: int = 2
    variant: str = "S1"
    gate_k0: float = 1.0  # S4 gate height at frame 0
    gate_alpha: float = 5.0  # S4 gate decay rate
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("joint_count", "d_model", "d_z", "d_intermediate", "d_c", "n_layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def d(self) -> int:
        return 3 * self.joint_count

    @property
    def cond_width(self) -> int:
        if self.variant in ("S1", "S2"):
            return self.d_z + 2 * self.d_c
        if self.variant == "S3":
            return self.d_z + self.d_c  # action projection only
        if self.variant == "S4":
            return self.d_z + self.d_c  # gated init pose folded into the latent
        return self.d_z + self.d_c  # S5: attended latent + init-pose projection

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def _linear_params(rng, d_in, d_out, dtype, scale=None) -> tuple[Tensor, Tensor]:
    scale = scale if scale is not None else 1.0 / np.sqrt(d_in)
    w = Tensor((rng.standard_normal((d_in, d_out)) * scale).astype(dtype), requires_grad=True)
    b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)
    return w, b


class ReactionModel:
    """Parameter container plus the forward pipeline.

    Parameters live both in a flat name -> Tensor map (used by the optimizer
    and checkpoints) and in structured per-block views; both reference the
    same tensors.
    """

    def __init__(self, config: ModelConfig, params: dict[str, Tensor],
                 enc_blocks: list, dec_blocks: list):
        self.config = config
        self.params = params
        self.enc_blocks = enc_blocks
        self.dec_blocks = dec_blocks

    # -- construction ---------------------------------------------------------

    @classmethod
    def init(cls, config: ModelConfig) -> "ReactionModel":
        rng = np.random.default_rng(config.seed)
        dtype = config.np_dtype
        c = config
        params: dict[str, Tensor] = {}

        def lin(name, d_in, d_out, scale=None):
            w, b = _linear_params(rng, d_in, d_out, dtype, scale)
            params[f"{name}.w"] = w
            params[f"{name}.b"] = b
            return w, b

        def make_blocks(prefix, count):
            blocks = []
            for i in range(count):
                if c.variant == "S2":
                    blk = init_attention_block(c.d_model, rng, c.d_intermediate, dtype=dtype)
                else:
                    blk = init_mamba_block(
                        c.d_model, c.n_state, rng, c.d_intermediate,
                        expand=c.expand, conv_width=c.conv_width, dtype=dtype,
                    )
                params.update(blk.named(f"{prefix}.blocks.{i}"))
                blocks.append(blk)
            params[f"{prefix}.final_norm"] = Tensor(np.ones(c.d_model, dtype=dtype), requires_grad=True)
            return blocks

        lin("encoder.embed", c.d, c.d_model)
        enc_blocks = make_blocks("encoder", c.n_layers)
        lin("encoder.mu", c.d_model, c.d_z)
        lin("encoder.logvar", c.d_model, c.d_z)

        lin("cond.action", c.d, c.d_c)
        if c.variant in ("S1", "S2", "S5"):
            lin("cond.init", c.d, c.d_c)
        if c.variant == "S4":
            lin("cond.gate", c.d, c.d_z)
        if c.variant == "S5":
            lin("cond.attn_q", c.d_z, c.d_c)
            lin("cond.attn_k", c.d_c, c.d_c)
            lin("cond.attn_v", c.d_c, c.d_z)

        lin("decoder.mlp1", c.cond_width, c.d_model)
        lin("decoder.mlp2", c.d_model, c.d_model)
        dec_blocks = make_blocks("decoder", c.n_layers)
        lin("decoder.head", c.d_model, c.d, scale=0.01 / np.sqrt(c.d_model))

        return cls(c, params, enc_blocks, dec_blocks)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    # -- pipeline stages ---------------------------------------------------------

    def _as_batched(self, frames, width: int, what: str) -> Tensor:
        if isinstance(frames, Tensor):
            x = frames
        else:
            x = Tensor(np.asarray(frames, dtype=self.config.np_dtype))
        if x.data.ndim == 2:
            x = nm.reshape(x, (1, *x.data.shape))
        if x.data.ndim != 3 or x.data.shape[-1] != width:
            raise ConfigError(
                f"{what}: expected (*, T, {width}), got {x.data.shape}"
            )
        return x

    def _run_blocks(self, x: Tensor, blocks, final_norm: Tensor) -> Tensor:
        residual = None
        for blk in blocks:
            if isinstance(blk, AttentionBlockParams):
                x, residual = attention_block(x, residual, blk)
            else:
                x, residual = mamba_block(x, residual, blk)
        return nm.rmsnorm(nm.add(x, residual), final_norm, eps=1e-6)

    def encode(self, reactor_frames) -> PosteriorStats:
        """Per-frame posterior statistics of shape (*, T, d_z)."""
        y = self._as_batched(reactor_frames, self.config.d, "encode")
        h = nm.linear(y, self._p("encoder.embed.w"), self._p("encoder.embed.b"))
        h = self._run_blocks(h, self.enc_blocks, self._p("encoder.final_norm"))
        mu = nm.linear(h, self._p("encoder.mu.w"), self._p("encoder.mu.b"))
        logvar = nm.linear(h, self._p("encoder.logvar.w"), self._p("encoder.logvar.b"))
        return PosteriorStats(mu=mu, logvar=logvar)

    def reparameterize(self, stats: PosteriorStats, rng: np.random.Generator) -> LatentSequence:
        """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I); deterministic per rng state."""
        eps = rng.standard_normal(stats.mu.data.shape).astype(stats.mu.data.dtype)
        sigma = nm.exp(nm.mul(stats.logvar, 0.5))
        return LatentSequence(z=nm.add(stats.mu, nm.mul(sigma, Tensor(eps))))

    def condition(self, z, actor_frames, init_pose) -> Tensor:
        """Combine the latent with the projected action stream and initial pose.

        z (*, T, d_z); actor_frames (*, T, d); init_pose (d,) or (*, d).
        The combination depends on the variant; see the module docstring.
        """
        c = self.config
        if isinstance(z, LatentSequence):
            z = z.z
        z = self._as_batched(z, c.d_z, "condition latent")
        actor = self._as_batched(actor_frames, c.d, "condition actor")
        bsz, t = z.data.shape[0], z.data.shape[1]
        if actor.data.shape[1] != t:
            raise UsageError(
                f"latent has {t} frames but actor has {actor.data.shape[1]}"
            )
        pose = init_pose if isinstance(init_pose, Tensor) else Tensor(
            np.asarray(init_pose, dtype=c.np_dtype)
        )
        if pose.data.ndim == 1:
            pose = nm.reshape(pose, (1, 1, -1))
        elif pose.data.ndim == 2:
            pose = nm.reshape(pose, (pose.data.shape[0], 1, pose.data.shape[1]))
        if pose.data.shape[-1] != c.d:
            raise ConfigError(f"initial pose width {pose.data.shape[-1]} != {c.d}")

        action_proj = nm.linear(actor, self._p("cond.action.w"), self._p("cond.action.b"))

        if c.variant in ("S1", "S2"):
            init_proj = nm.linear(pose, self._p("cond.init.w"), self._p("cond.init.b"))
            init_proj = nm.broadcast_to(init_proj, (bsz, t, c.d_c))
            return nm.concat([z, action_proj, init_proj], axis=-1)

        if c.variant == "S3":
            return nm.concat([z, action_proj], axis=-1)

        if c.variant == "S4":
            # init pose enters through a gate that decays along the sequence
            gate = c.gate_k0 * np.exp(-c.gate_alpha * np.arange(t) / t)
            gate = Tensor(gate.reshape(1, t, 1).astype(c.np_dtype))
            pose_z = nm.linear(pose, self._p("cond.gate.w"), self._p("cond.gate.b"))
            pose_z = nm.broadcast_to(pose_z, (bsz, t, c.d_z))
            z = nm.add(nm.mul(z, nm.add(nm.mul(gate, -1.0), 1.0)), nm.mul(pose_z, gate))
            return nm.concat([z, action_proj], axis=-1)

        # S5: latent attends to the action projection; init pose still concatenated
        q = nm.linear(z, self._p("cond.attn_q.w"), self._p("cond.attn_q.b"))
        k = nm.linear(action_proj, self._p("cond.attn_k.w"), self._p("cond.attn_k.b"))
        v = nm.linear(action_proj, self._p("cond.attn_v.w"), self._p("cond.attn_v.b"))
        scores = nm.mul(nm.matmul(q, nm.swapaxes(k, -1, -2)), 1.0 / np.sqrt(c.d_c))
        att = nm.softmax(scores, axis=-1)
        z = nm.add(z, nm.matmul(att, v))
        init_proj = nm.linear(pose, self._p("cond.init.w"), self._p("cond.init.b"))
        init_proj = nm.broadcast_to(init_proj, (bsz, t, c.d_c))
        return nm.concat([z, init_proj], axis=-1)

    def decode(self, cond: Tensor) -> Tensor:
        """Conditioned sequence (*, T, cond_width) -> motion (*, T, d)."""
        c = self.config
        cond = self._as_batched(cond, c.cond_width, "decode")
        h = nm.linear(cond, self._p("decoder.mlp1.w"), self._p("decoder.mlp1.b"))
        h = nm.silu(h)
        h = nm.linear(h, self._p("decoder.mlp2.w"), self._p("decoder.mlp2.b"))
        h = self._run_blocks(h, self.dec_blocks, self._p("decoder.final_norm"))
        return nm.linear(h, self._p("decoder.head.w"), self._p("decoder.head.b"))

    # -- end-to-end paths -----------------------------------------------------------

    def reconstruct(self, reactor_frames, actor_frames, init_pose,
                    rng: np.random.Generator) -> tuple[Tensor, PosteriorStats]:
        """Training path: encode, sample, condition, decode."""
        stats = self.encode(reactor_frames)
        z = self.reparameterize(stats, rng)
        cond = self.condition(z, actor_frames, init_pose)
        return self.decode(cond), stats

    def generate(self, actor: MotionSequence, init_pose: np.ndarray,
                 seed: int) -> MotionSequence:
        """Sample a reaction for the given actor motion and initial pose.

        The latent is drawn i.i.d. standard normal per frame; the output is a
        pure function of (actor, init_pose, parameters, seed).
        """
        c = self.config
        if actor.d != c.d:
            raise ConfigError(f"actor width {actor.d} != model width {c.d}")
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((1, actor.t, c.d_z)).astype(c.np_dtype)
        cond = self.condition(Tensor(z), actor.frames, np.asarray(init_pose, dtype=c.np_dtype))
        out = self.decode(cond)
        frames = out.data[0].astype(np.float32)
        return MotionSequence(
            frames=frames, fps=actor.fps, joint_count=actor.joint_count,
            skeleton_id=actor.skeleton_id,
        )

    def generate_long(self, actor: MotionSequence, init_pose: np.ndarray,
                      window: int, seed: int) -> MotionSequence:
        """Chain fixed-length windows; each window's initial pose is the last
        generated frame of the previous one. Windows do not overlap; a final
        shorter remainder window is allowed."""
        if window < 1 or window > actor.t:
            raise UsageError(f"window ({window}) must be in [1, actor length {actor.t}]")
        chunks = []
        pose = np.asarray(init_pose, dtype=np.float32)
        start = 0
        index = 0
        while start < actor.t:
            stop = min(start + window, actor.t)
            piece = MotionSequence(
                frames=actor.frames[start:stop], fps=actor.fps,
                joint_count=actor.joint_count, skeleton_id=actor.skeleton_id,
            )
            # stride keeps window streams of nearby master seeds disjoint;
            # window 0 uses the master seed so one window == generate()
            out = self.generate(piece, pose, seed=seed + index * 1_000_003)
            chunks.append(out.frames)
            pose = out.frames[-1]
            start = stop
            index += 1
        return MotionSequence(
            frames=np.concatenate(chunks, axis=0), fps=actor.fps,
            joint_count=actor.joint_count, skeleton_id=actor.skeleton_id,
        )
