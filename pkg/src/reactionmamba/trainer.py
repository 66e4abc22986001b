"""Training loop: Adam with cosine-annealed learning rate, JSON-lines logs,
and a deterministic checkpoint container.

The checkpoint is a ZIP archive (stored, fixed timestamps, so identical
training runs produce identical bytes) holding manifest.json -- tensor
names, shapes, dtypes, byte offsets, configs, normalization stats, optimizer
and rng state -- plus tensors.bin, the concatenation of one contiguous
little-endian float32 blob per tensor.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionPair, NormStats
from .errors import ConfigError, DataFormatError, DomainError, NumericError, UsageError
from .model import ModelConfig, ReactionModel
from .numerics import Tensor
from .objectives import LossWeights, kl_loss, reaction_loss, recon_loss, total_loss

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class TrainConfig:
    model: ModelConfig
    base_lr: float = 1e-4
    lr_min: float | None = None  # defaults to base_lr / 100
    total_steps: int = 1000
    batch_size: int = 16
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 1000
    grad_clip: float | None = None

    def __post_init__(self):
        if self.lr_min is None:
            self.lr_min = self.base_lr / 100.0
        if not (0 < self.lr_min <= self.base_lr):
            raise ConfigError(f"need 0 < lr_min ({self.lr_min}) <= base_lr ({self.base_lr})")
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "base_lr": self.base_lr,
            "lr_min": self.lr_min,
            "total_steps": self.total_steps,
            "batch_size": self.batch_size,
            "weights": self.weights.to_dict(),
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "grad_clip": self.grad_clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        d["weights"] = LossWeights(**d["weights"])
        return cls(**d)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            step=0,
        )


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam update, in place."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        update = (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype)
        p.data = p.data - update


def cosine_lr(step: int, total_steps: int, base_lr: float, lr_min: float) -> float:
    """lr_min + (base_lr - lr_min) (1 + cos(pi step / total_steps)) / 2."""
    if not 0 <= step <= total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (base_lr - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


# -- checkpoint container -----------------------------------------------------------


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def save_checkpoint(path: str, params: dict[str, Tensor], train_config: TrainConfig,
                    norm_stats: NormStats | None, adam_state: AdamState | None = None,
                    rng: np.random.Generator | None = None) -> None:
    tensors = dict(params)
    if adam_state is not None:
        for name, arr in adam_state.m.items():
            tensors[f"adam.m.{name}"] = Tensor(arr.astype(np.float32))
        for name, arr in adam_state.v.items():
            tensors[f"adam.v.{name}"] = Tensor(arr.astype(np.float32))

    blob = io.BytesIO()
    entries = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name].data.astype(np.float32))
        raw = arr.astype("<f4").tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "float32",
            "offset": offset,
            "nbytes": len(raw),
        })
        blob.write(raw)
        offset += len(raw)

    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "train_config": train_config.to_dict(),
        "norm_stats": norm_stats.to_dict() if norm_stats is not None else None,
        "adam_step": adam_state.step if adam_state is not None else None,
        "rng_state": _rng_state_to_json(rng) if rng is not None else None,
        "tensors": entries,
    }

    tmp = path + ".tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_ZIP_DATE)
        zf.writestr(info, json.dumps(manifest, indent=1))
        info = zipfile.ZipInfo("tensors.bin", date_time=_ZIP_DATE)
        zf.writestr(info, blob.getvalue())
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    train_config: TrainConfig
    norm_stats: NormStats | None
    adam_state: AdamState | None
    rng_state: dict | None

    def build_model(self) -> ReactionModel:
        model = ReactionModel.init(self.train_config.model)
        for name, tensor in model.params.items():
            if name not in self.params:
                raise DataFormatError(f"checkpoint is missing tensor {name!r}")
            arr = self.params[name]
            if tuple(arr.shape) != tensor.data.shape:
                raise DataFormatError(
                    f"tensor {name!r} has shape {arr.shape}, expected {tensor.data.shape}"
                )
            tensor.data = arr.astype(tensor.data.dtype)
        return model


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise UsageError(f"checkpoint {path!r} does not exist")
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
            blob = zf.read("tensors.bin")
        except KeyError as exc:
            raise DataFormatError(f"{path}: missing archive member {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: corrupt manifest: {exc}") from exc

    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataFormatError(f"{path}: format_version {version!r} != {CHECKPOINT_FORMAT_VERSION}")

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        lo, n = entry["offset"], entry["nbytes"]
        expected = int(np.prod(entry["shape"])) * 4 if entry["shape"] else 4
        if n != expected or lo + n > len(blob):
            raise DataFormatError(
                f"{path}: tensor {entry['name']!r} blob is {n} bytes, expected {expected}"
            )
        arr = np.frombuffer(blob[lo : lo + n], dtype="<f4").reshape(entry["shape"]).copy()
        tensors[entry["name"]] = arr

    train_config = TrainConfig.from_dict(manifest["train_config"])
    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    adam_state = None
    if manifest.get("adam_step") is not None:
        adam_state = AdamState(
            m={k[len("adam.m."):]: v for k, v in tensors.items() if k.startswith("adam.m.")},
            v={k[len("adam.v."):]: v for k, v in tensors.items() if k.startswith("adam.v.")},
            step=manifest["adam_step"],
        )
    norm_stats = (
        NormStats.from_dict(manifest["norm_stats"]) if manifest.get("norm_stats") else None
    )
    return Checkpoint(
        params=params, train_config=train_config, norm_stats=norm_stats,
        adam_state=adam_state, rng_state=manifest.get("rng_state"),
    )


# -- training loop --------------------------------------------------------------------


def _batch_arrays(pairs: list[InteractionPair], idx: np.ndarray, dtype) -> tuple:
    actor = np.stack([pairs[i].actor.frames for i in idx]).astype(dtype)
    reactor = np.stack([pairs[i].reactor.frames for i in idx]).astype(dtype)
    return actor, reactor


def train(config: TrainConfig, train_pairs: list[InteractionPair],
          norm_stats: NormStats | None = None, out_dir: str | None = None,
          resume_from: str | None = None, log_every: int = 1) -> tuple[ReactionModel, list[dict]]:
    """Run the optimization loop; returns the trained model and the log.

    The loop is a deterministic function of (config, data, seed): one rng
    drives batch sampling and latent noise in a fixed order. out_dir, when
    given, receives step logs (log.jsonl), periodic checkpoints, and the
    final checkpoint (checkpoint_final.rmck). A non-finite loss aborts the
    run, keeping the last good checkpoint on disk.
    """
    if not train_pairs:
        raise ConfigError("training requires at least one pair")
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        model = ckpt.build_model()
        adam = ckpt.adam_state or AdamState.init(model.params)
        rng = np.random.default_rng(config.seed)
        if ckpt.rng_state is not None:
            rng.bit_generator.state = ckpt.rng_state
        start_step = adam.step
    else:
        model = ReactionModel.init(config.model)
        adam = AdamState.init(model.params)
        rng = np.random.default_rng(config.seed)
        start_step = 0

    dtype = config.model.np_dtype
    t_expected = train_pairs[0].actor.t
    for p in train_pairs:
        if p.actor.t != t_expected:
            raise ConfigError("all training pairs must share the same length; window them first")

    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "log.jsonl"), "a" if resume_from else "w",
                      encoding="utf-8")

    records: list[dict] = []
    try:
        for step in range(start_step, config.total_steps):
            lr = cosine_lr(step, config.total_steps, config.base_lr, config.lr_min)
            idx = rng.integers(0, len(train_pairs), size=config.batch_size)
            actor, reactor = _batch_arrays(train_pairs, idx, dtype)
            init_pose = reactor[:, 0, :]

            for p in model.params.values():
                p.grad = None
            try:
                pred, stats = model.reconstruct(reactor, actor, init_pose, rng)
                r_loss = recon_loss(pred, Tensor(reactor))
                k_loss = kl_loss(stats)
                c_loss = reaction_loss(pred, Tensor(reactor), Tensor(actor))
                loss, report = total_loss(r_loss, k_loss, c_loss, config.weights)
                loss.backward()
            except NumericError:
                if log_fh:
                    log_fh.close()
                raise

            grads = {}
            for name, p in model.params.items():
                if p.grad is not None:
                    grads[name] = p.grad
            if config.grad_clip is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > config.grad_clip:
                    scale = config.grad_clip / norm
                    grads = {k: g * scale for k, g in grads.items()}
            adam_step(model.params, grads, adam, lr)

            record = {"step": step + 1, "lr": lr, **report.to_dict()}
            records.append(record)
            if log_fh and (step + 1) % log_every == 0:
                log_fh.write(json.dumps(record) + "\n")

            if out_dir and (step + 1) % config.checkpoint_every == 0:
                save_checkpoint(
                    os.path.join(out_dir, f"checkpoint_{step + 1:07d}.rmck"),
                    model.params, config, norm_stats, adam, rng,
                )
    finally:
        if log_fh:
            log_fh.close()

    if out_dir:
        save_checkpoint(os.path.join(out_dir, "checkpoint_final.rmck"),
                        model.params, config, norm_stats, adam, rng)
    return model, records
