"""Evaluation metrics for generated motion.

Position error (MPJPE) and velocity error (MPJVE) compare prediction and
ground truth joint by joint. Distributional quality (FID) compares Gaussian
fits of sequence features; diversity is the mean pairwise distance within a
set, reported as the generated/ground-truth ratio.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .model import MotionSequence

log = logging.getLogger(__name__)


@dataclass
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        f = self.mean.shape[0]
        if self.covariance.shape != (f, f):
            raise ShapeError(f"covariance {self.covariance.shape} does not match mean ({f},)")


@dataclass
class EvalReport:
    mpjpe: float
    mpjve: float
    fid: float
    div_gen: float
    div_gt: float
    div_ratio: float
    sequence_count: int
    frame_count: int

    def to_dict(self) -> dict:
        return {
            "mpjpe": self.mpjpe,
            "mpjve": self.mpjve,
            "fid": self.fid,
            "div_gen": self.div_gen,
            "div_gt": self.div_gt,
            "div_ratio": self.div_ratio,
            "sequence_count": self.sequence_count,
            "frame_count": self.frame_count,
        }

    def markdown_row(self, label: str) -> str:
        return (
            f"| {label} | {self.mpjpe:.4f} | {self.mpjve:.5f} | "
            f"{self.fid:.4f} | {self.div_ratio:.4f} |"
        )


MARKDOWN_HEADER = "| Model | MPJPE | MPJVE | FID | div_gen/div_gt |\n|---|---|---|---|---|"


def _joints(seq) -> np.ndarray:
    if isinstance(seq, MotionSequence):
        return seq.joints().astype(np.float64)
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] % 3 == 0:
        return arr.reshape(arr.shape[0], -1, 3)
    if arr.ndim == 3 and arr.shape[-1] == 3:
        return arr
    raise ShapeError(f"cannot interpret shape {arr.shape} as (T, J, 3) joints")


def _paired(pred, gt) -> list[tuple[np.ndarray, np.ndarray]]:
    if isinstance(pred, (MotionSequence, np.ndarray)):
        pred, gt = [pred], [gt]
    if len(pred) != len(gt):
        raise ShapeError(f"{len(pred)} predictions vs {len(gt)} ground truths")
    pairs = []
    for p, g in zip(pred, gt):
        pj, gj = _joints(p), _joints(g)
        if pj.shape != gj.shape:
            raise ShapeError(f"sequence shapes differ: {pj.shape} vs {gj.shape}")
        pairs.append((pj, gj))
    return pairs


def mpjpe(pred, gt) -> float:
    """Mean over frames and joints of the Euclidean distance between
    corresponding joints, averaged across sequences."""
    values = []
    for pj, gj in _paired(pred, gt):
        values.append(np.linalg.norm(pj - gj, axis=-1).mean())
    return float(np.mean(values))


def mpjve(pred, gt) -> float:
    """Mean Euclidean distance between per-frame joint velocity vectors."""
    values = []
    for pj, gj in _paired(pred, gt):
        if pj.shape[0] < 2:
            raise DomainError("velocity error requires at least 2 frames")
        pv = np.diff(pj, axis=0)
        gv = np.diff(gj, axis=0)
        values.append(np.linalg.norm(pv - gv, axis=-1).mean())
    return float(np.mean(values))


def fit_gaussian(features: np.ndarray) -> GaussianStats:
    """Sample mean and unbiased covariance of row-stacked feature vectors."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise DomainError(f"need at least 2 feature rows, got shape {features.shape}")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False).reshape(features.shape[1], features.shape[1])
    return GaussianStats(mean=mean, covariance=cov, sample_count=features.shape[0])


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues slightly below zero (floating-point noise) are clipped to 0;
    genuine asymmetry is rejected.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"matrix square root needs a square matrix, got {m.shape}")
    if np.abs(m - m.T).max() > 1e-6:
        raise DomainError("matrix is not symmetric within 1e-6")
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(real: GaussianStats, gen: GaussianStats) -> float:
    """||mu - mu_hat||^2 + Tr(S + S_hat - 2 (S S_hat)^{1/2}).

    The cross term is evaluated through the symmetrized product
    sqrt(S^{1/2} S_hat S^{1/2}), which has the same trace and keeps the
    computation in symmetric-PSD territory. Tiny negative results from
    floating-point noise are clipped to 0.
    """
    if real.mean.shape != gen.mean.shape:
        raise ShapeError(f"feature dims differ: {real.mean.shape} vs {gen.mean.shape}")
    diff = real.mean - gen.mean
    s_half = matrix_sqrt_psd(real.covariance)
    cross = matrix_sqrt_psd(s_half @ gen.covariance @ s_half)
    value = float(diff @ diff + np.trace(real.covariance + gen.covariance - 2.0 * cross))
    if value < -1e-6:
        raise DomainError(f"FID evaluated to {value}; covariance inputs are inconsistent")
    if value < 0.0:
        log.warning("clipping slightly negative FID %.3e to 0", value)
        value = 0.0
    return value


def _pair_from_index(p: int) -> tuple[int, int]:
    # p indexes the strictly-lower-triangular pairs row by row:
    # (1,0), (2,0), (2,1), (3,0), ...
    i = int((1 + np.sqrt(1 + 8 * p)) // 2)
    while i * (i - 1) // 2 > p:
        i -= 1
    j = p - i * (i - 1) // 2
    return i, j


def diversity(sequences, num_pairs: int | None = None,
              rng: np.random.Generator | None = None) -> float:
    """Mean pairwise distance over randomly sampled unique sequence pairs.

    For each sampled pair, distances are averaged per frame and per joint.
    Sampling is seeded and without replacement.
    """
    seqs = [_joints(s) for s in sequences]
    n = len(seqs)
    if n < 2:
        raise DomainError(f"diversity needs at least 2 sequences, got {n}")
    total = n * (n - 1) // 2
    if num_pairs is None:
        num_pairs = min(1000, total)
    if num_pairs > total:
        raise DomainError(f"requested {num_pairs} unique pairs but only {total} exist")
    rng = rng or np.random.default_rng(0)
    chosen = rng.choice(total, size=num_pairs, replace=False)
    values = []
    for p in chosen:
        i, j = _pair_from_index(int(p))
        if seqs[i].shape != seqs[j].shape:
            raise ShapeError(f"sequences {i} and {j} have different shapes")
        values.append(np.linalg.norm(seqs[i] - seqs[j], axis=-1).mean())
    return float(np.mean(values))


def feature_extract(seq, mode: str = "flat", model=None) -> np.ndarray:
    """Fixed-length feature vector of one sequence.

    flat mode (default, deterministic): per-joint coordinate means (3k),
    per-joint coordinate stds (3k), and per-joint mean speed (k); 7k features.
    encoder mode: mean-pooled posterior means from a trained encoder.
    """
    if mode == "flat":
        joints = _joints(seq)
        t, k, _ = joints.shape
        means = joints.mean(axis=0).reshape(-1)
        stds = joints.std(axis=0).reshape(-1)
        if t > 1:
            speed = np.linalg.norm(np.diff(joints, axis=0), axis=-1).mean(axis=0)
        else:
            speed = np.zeros(k)
        return np.concatenate([means, stds, speed])
    if mode == "encoder":
        if model is None:
            raise DomainError("encoder feature mode requires a trained model")
        frames = seq.frames if isinstance(seq, MotionSequence) else np.asarray(seq)
        stats = model.encode(frames.astype(model.config.np_dtype))
        return stats.mu.data[0].mean(axis=0).astype(np.float64)
    raise DomainError(f"unknown feature mode {mode!r}")


def evaluate_sets(generated, ground_truth, num_pairs: int | None = None,
                  seed: int = 0, feature_mode: str = "flat", model=None) -> EvalReport:
    """Full metric suite over matched generated/ground-truth sequence sets."""
    feats_gen = np.stack([feature_extract(s, feature_mode, model) for s in generated])
    feats_gt = np.stack([feature_extract(s, feature_mode, model) for s in ground_truth])
    fid_value = fid(fit_gaussian(feats_gt), fit_gaussian(feats_gen))
    div_gen = diversity(generated, num_pairs, np.random.default_rng(seed))
    div_gt = diversity(ground_truth, num_pairs, np.random.default_rng(seed))
    return EvalReport(
        mpjpe=mpjpe(generated, ground_truth),
        mpjve=mpjve(generated, ground_truth),
        fid=fid_value,
        div_gen=div_gen,
        div_gt=div_gt,
        div_ratio=div_gen / div_gt if div_gt > 0 else float("inf") if div_gen > 0 else 1.0,
        sequence_count=len(generated),
        frame_count=int(sum(_joints(s).shape[0] for s in generated)),
    )
