"""Synthetic actor-reactor data, the JSON motion interchange format,
normalization, and fixed-length windowing.

Three interaction families stand in for motion-capture data at desk scale:
mirror (the reactor reflects the actor across the x=0 plane), lagged-follow
(the reactor repeats the actor with a 3-frame delay and a per-pair spatial
offset, so the offset is recoverable only from the reactor's first frame),
and push-impulse (a resting reactor is displaced when the actor's root
approaches, with an exponentially decaying response).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataFormatError, DomainError, UsageError
from .model import MotionSequence

log = logging.getLogger(__name__)

FAMILIES = ("mirror", "lagged-follow", "push-impulse")
FOLLOW_LAG = 3
PUSH_TRIGGER_RADIUS = 0.6
PUSH_GAIN = 0.8
PUSH_DECAY = 4.0  # frames
MOTION_FORMAT_VERSION = 1


@dataclass
class InteractionPair:
    actor: MotionSequence
    reactor: MotionSequence
    class_label: str | None = None
    pair_id: str = ""
    source_offset: int = 0  # frame offset into the source sequence, for windows

    def __post_init__(self):
        if self.actor.t != self.reactor.t:
            raise DomainError(
                f"actor has {self.actor.t} frames but reactor has {self.reactor.t}"
            )
        if self.actor.joint_count != self.reactor.joint_count:
            raise DomainError("actor and reactor must share a skeleton")
        if self.actor.fps != self.reactor.fps:
            raise DomainError(
                f"actor at {self.actor.fps} fps but reactor at {self.reactor.fps}"
            )


@dataclass
class NormStats:
    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,), floored at 1e-6
    computed_on: str = ""

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float32).reshape(-1)

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "computed_on": self.computed_on,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(mean=np.array(d["mean"]), std=np.array(d["std"]),
                   computed_on=d.get("computed_on", ""))


# -- synthetic generation -------------------------------------------------------------


def _smooth_trajectories(rng: np.random.Generator, t: int, k: int,
                         amplitude: float = 0.4) -> np.ndarray:
    """Per-joint smooth random displacement curves via cubic splines."""
    n_ctrl = max(4, t // 6)
    times = np.linspace(0.0, t - 1.0, n_ctrl)
    ctrl = rng.normal(0.0, amplitude, size=(n_ctrl, k, 3))
    spline = CubicSpline(times, ctrl, axis=0)
    return spline(np.arange(t))  # (t, k, 3)


def _base_skeleton(rng: np.random.Generator, k: int) -> np.ndarray:
    """Joint rest offsets around the root so joints are distinguishable."""
    base = rng.uniform(-0.3, 0.3, size=(k, 3))
    base[0] = 0.0
    return base


def _actor_motion(rng: np.random.Generator, t: int, k: int, family: str) -> np.ndarray:
    base = _base_skeleton(rng, k)
    joints = base[None, :, :] + _smooth_trajectories(rng, t, k)
    if family == "push-impulse":
        # drift the whole body toward the reactor's station at x = +1
        drift = np.linspace(-1.5, 0.8, t)
        joints = joints + np.stack([drift, np.zeros(t), np.zeros(t)], axis=1)[:, None, :]
    return joints


def _mirror_rule(actor: np.ndarray) -> np.ndarray:
    out = actor.copy()
    out[..., 0] = -out[..., 0]
    return out


def _follow_rule(actor: np.ndarray, offset: np.ndarray, lag: int = FOLLOW_LAG) -> np.ndarray:
    t = actor.shape[0]
    idx = np.maximum(np.arange(t) - lag, 0)
    return actor[idx] + offset[None, None, :]


def _push_rule(actor: np.ndarray) -> np.ndarray:
    """Deterministic impulse response to the actor's approach.

    The reactor rests at the actor's first pose shifted to x = +1.5; whenever
    the actor's root comes within the trigger radius of the reactor's root,
    a displacement impulse along the separation direction is added, decaying
    exponentially afterwards.
    """
    t = actor.shape[0]
    base = actor[0] + np.array([1.5, 0.0, 0.0])
    root = base[0]
    reactor = np.tile(base, (t, 1, 1))
    response = np.zeros(3)
    for step in range(t):
        sep = root - actor[step, 0]
        dist = float(np.linalg.norm(sep))
        response = response * math.exp(-1.0 / PUSH_DECAY)
        if dist < PUSH_TRIGGER_RADIUS:
            direction = sep / dist if dist > 1e-9 else np.array([1.0, 0.0, 0.0])
            response = response + PUSH_GAIN * (1.0 - dist / PUSH_TRIGGER_RADIUS) * direction
        reactor[step] += response[None, :]
    return reactor


def synth_dataset(n_pairs: int, t: int, k: int, family: str,
                  noise: float = 0.01, seed: int = 0, fps: int = 30) -> list[InteractionPair]:
    """Generate actor-reactor pairs under one interaction family.

    Deterministic per seed; noise is Gaussian, applied to the reactor only,
    so the family rule is exactly checkable at noise=0.
    """
    if family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if t < 4 or k < 2:
        raise DomainError(f"need t >= 4 and k >= 2, got t={t}, k={k}")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_pairs):
        actor = _actor_motion(rng, t, k, family)
        if family == "mirror":
            reactor = _mirror_rule(actor)
        elif family == "lagged-follow":
            offset = rng.uniform(-0.4, 0.4, size=3)
            reactor = _follow_rule(actor, offset)
        else:
            reactor = _push_rule(actor)
        if noise > 0:
            reactor = reactor + rng.normal(0.0, noise, size=reactor.shape)
        pairs.append(
            InteractionPair(
                actor=MotionSequence(frames=actor.reshape(t, -1).astype(np.float32),
                                     fps=fps, joint_count=k, skeleton_id=f"synthetic-{k}j"),
                reactor=MotionSequence(frames=reactor.reshape(t, -1).astype(np.float32),
                                       fps=fps, joint_count=k, skeleton_id=f"synthetic-{k}j"),
                class_label=family,
                pair_id=f"{family}-{seed}-{i:05d}",
            )
        )
    return pairs


def family_residual(pair: InteractionPair, family: str | None = None) -> float:
    """Max deviation of the reactor from the family rule (0 at noise=0)."""
    family = family or pair.class_label
    actor = pair.actor.joints().astype(np.float64)
    reactor = pair.reactor.joints().astype(np.float64)
    if family == "mirror":
        expect = _mirror_rule(actor)
    elif family == "lagged-follow":
        offset = reactor[0, 0] - actor[0, 0]
        expect = _follow_rule(actor, offset)
    elif family == "push-impulse":
        expect = _push_rule(actor)
    else:
        raise UsageError(f"unknown family {family!r}")
    return float(np.abs(reactor - expect).max())


# -- normalization ----------------------------------------------------------------------


def fit_norm_stats(pairs: list[InteractionPair], dataset_id: str = "") -> NormStats:
    """Per-coordinate mean/std over all actor and reactor frames."""
    stacked = np.concatenate(
        [p.actor.frames for p in pairs] + [p.reactor.frames for p in pairs], axis=0
    )
    std = stacked.std(axis=0)
    floored = np.maximum(std, 1e-6)
    if np.any(std < 1e-6):
        log.warning("flooring %d zero-variance coordinates at 1e-6", int((std < 1e-6).sum()))
    return NormStats(mean=stacked.mean(axis=0), std=floored, computed_on=dataset_id)


def normalize(pairs: list[InteractionPair],
              stats: NormStats | None = None) -> tuple[list[InteractionPair], NormStats]:
    """Standardize every coordinate; fit stats on the input when none given."""
    if stats is None:
        stats = fit_norm_stats(pairs)

    def apply(seq: MotionSequence) -> MotionSequence:
        frames = (seq.frames - stats.mean) / stats.std
        return replace(seq, frames=frames.astype(np.float32))

    out = [
        replace(p, actor=apply(p.actor), reactor=apply(p.reactor))
        for p in pairs
    ]
    return out, stats


def denormalize_frames(frames: np.ndarray, stats: NormStats) -> np.ndarray:
    return frames * stats.std + stats.mean


# -- file format --------------------------------------------------------------------------


def _motion_to_dict(seq: MotionSequence) -> dict:
    return {
        "format_version": MOTION_FORMAT_VERSION,
        "fps": int(seq.fps),
        "joint_count": int(seq.joint_count),
        "skeleton_id": seq.skeleton_id,
        "frames": [[float(v) for v in row] for row in seq.frames],
    }


def _motion_from_dict(doc: dict, path: str) -> MotionSequence:
    version = doc.get("format_version")
    if version != MOTION_FORMAT_VERSION:
        raise DataFormatError(f"{path}: format_version {version!r} != {MOTION_FORMAT_VERSION}")
    for key in ("fps", "joint_count", "frames"):
        if key not in doc:
            raise DataFormatError(f"{path}: missing key {key!r}")
    k = int(doc["joint_count"])
    rows = doc["frames"]
    if not rows:
        raise DataFormatError(f"{path}: empty frame list")
    widths = {len(r) for r in rows}
    if widths != {3 * k}:
        raise DataFormatError(
            f"{path}: joint_count {k} implies row width {3 * k}, found widths {sorted(widths)}"
        )
    frames = np.asarray(rows, dtype=np.float32)
    if not np.all(np.isfinite(frames)):
        raise DataFormatError(f"{path}: non-finite coordinate values")
    return MotionSequence(
        frames=frames, fps=int(doc["fps"]), joint_count=k,
        skeleton_id=str(doc.get("skeleton_id", "default")),
    )


def _reject_constant(name):
    raise DataFormatError(f"non-finite JSON constant {name!r}")


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc


def save_motion(seq_or_pair, path: str) -> None:
    """Write a motion or pair file. Coordinates are float32, serialized in a
    form that round-trips bit-exactly through JSON."""
    if isinstance(seq_or_pair, InteractionPair):
        doc = {
            "format_version": MOTION_FORMAT_VERSION,
            "class_label": seq_or_pair.class_label,
            "pair_id": seq_or_pair.pair_id,
            "actor": _motion_to_dict(seq_or_pair.actor),
            "reactor": _motion_to_dict(seq_or_pair.reactor),
        }
    else:
        doc = _motion_to_dict(seq_or_pair)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, allow_nan=False)


def load_motion(path: str):
    """Read a motion or pair file; returns MotionSequence or InteractionPair."""
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: expected a JSON object")
    if "actor" in doc or "reactor" in doc:
        if "actor" not in doc or "reactor" not in doc:
            raise DataFormatError(f"{path}: pair file needs both actor and reactor")
        version = doc.get("format_version")
        if version != MOTION_FORMAT_VERSION:
            raise DataFormatError(f"{path}: format_version {version!r} != {MOTION_FORMAT_VERSION}")
        return InteractionPair(
            actor=_motion_from_dict(doc["actor"], path),
            reactor=_motion_from_dict(doc["reactor"], path),
            class_label=doc.get("class_label"),
            pair_id=str(doc.get("pair_id", "")),
        )
    return _motion_from_dict(doc, path)


def save_manifest(entries: list[dict], path: str) -> None:
    """Manifest is a JSON list of {"path": ..., "split": "train"|"test"}."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=1)


def load_manifest(path: str) -> list[dict]:
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise DataFormatError(f"{path}: manifest must be a JSON list")
    for entry in doc:
        if not isinstance(entry, dict) or "path" not in entry or "split" not in entry:
            raise DataFormatError(f"{path}: manifest entries need 'path' and 'split'")
        if entry["split"] not in ("train", "test"):
            raise DataFormatError(f"{path}: split must be train or test, got {entry['split']!r}")
    return doc


def load_split(manifest_path: str, split: str) -> list[InteractionPair]:
    import os

    base = os.path.dirname(os.path.abspath(manifest_path))
    entries = load_manifest(manifest_path)
    pairs = []
    for entry in entries:
        if entry["split"] != split:
            continue
        p = entry["path"]
        full = p if os.path.isabs(p) else os.path.join(base, p)
        loaded = load_motion(full)
        if not isinstance(loaded, InteractionPair):
            raise DataFormatError(f"{full}: manifest entry is not a pair file")
        pairs.append(loaded)
    return pairs


# -- windowing ---------------------------------------------------------------------------


def split_windows(pairs: list[InteractionPair], window_t: int,
                  stride: int | None = None) -> list[InteractionPair]:
    """Cut each pair into fixed-length windows; stride defaults to window_t
    (no overlap). Pairs shorter than the window are skipped with a warning.
    Window pair_ids carry the source frame offset."""
    if window_t < 1:
        raise DomainError(f"window must be >= 1, got {window_t}")
    stride = stride or window_t
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    out = []
    for pair in pairs:
        t = pair.actor.t
        if window_t > t:
            log.warning("skipping pair %s: %d frames < window %d", pair.pair_id, t, window_t)
            continue
        for start in range(0, t - window_t + 1, stride):
            out.append(
                InteractionPair(
                    actor=replace(pair.actor, frames=pair.actor.frames[start : start + window_t].copy()),
                    reactor=replace(pair.reactor, frames=pair.reactor.frames[start : start + window_t].copy()),
                    class_label=pair.class_label,
                    pair_id=f"{pair.pair_id}:{start}",
                    source_offset=start,
                )
            )
    return out
