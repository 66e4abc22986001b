"""Inference-speed harness: end-to-end generation timing and the
linear-vs-quadratic scaling comparison between the state-space decoder and
its attention swap-in.

Timing covers conditioning plus decoding only (no file writes, no parameter
loading); the measured region starts after warmup runs. Medians over trials
resist scheduler noise.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DomainError
from .model import ModelConfig, MotionSequence, ReactionModel


def thread_cap(default: int | None = None) -> int | None:
    """Parallelism cap from REACTIONMAMBA_THREADS, else the given default."""
    env = os.environ.get("REACTIONMAMBA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise DomainError(f"REACTIONMAMBA_THREADS={env!r} is not an integer") from exc
    return default


@dataclass
class LengthTiming:
    sequence_length: int
    total_time: float  # seconds, whole batch of sequences, median over trials
    time_per_sequence: float
    frames_per_second: float


@dataclass
class TimingReport:
    variant: str
    n_sequences: int
    trials: int
    warmup: int
    lengths: list[int]
    timings: list[LengthTiming]
    exponent: float | None = None
    samples: list[tuple[int, float]] = field(default_factory=list)  # raw (T, seconds)
    note: str = "measures model compute only; excludes file IO and setup"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "n_sequences": self.n_sequences,
            "trials": self.trials,
            "warmup": self.warmup,
            "lengths": self.lengths,
            "timings": [
                {
                    "sequence_length": t.sequence_length,
                    "total_time": t.total_time,
                    "time_per_sequence": t.time_per_sequence,
                    "frames_per_second": t.frames_per_second,
                }
                for t in self.timings
            ],
            "exponent": self.exponent,
            "samples": [[t, s] for t, s in self.samples],
            "note": self.note,
        }

    def markdown(self) -> str:
        lines = [
            "| Variant | T | Total Time (min) | Time per Sequence (s) | FPS |",
            "|---|---|---|---|---|",
        ]
        for t in self.timings:
            lines.append(
                f"| {self.variant} | {t.sequence_length} | {t.total_time / 60:.4f} | "
                f"{t.time_per_sequence:.4f} | {t.frames_per_second:.1f} |"
            )
        if self.exponent is not None:
            lines.append(f"\nfitted log-log exponent: {self.exponent:.3f}")
        return "\n".join(lines)

    def csv(self) -> str:
        lines = ["sequence_length,seconds"]
        lines += [f"{t},{s:.9f}" for t, s in self.samples]
        return "\n".join(lines)


def fit_loglog_exponent(lengths, times) -> float:
    """Least-squares slope of log(time) against log(length)."""
    lengths = np.asarray(lengths, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if lengths.shape[0] < 3:
        raise DomainError(f"exponent fit needs >= 3 lengths, got {lengths.shape[0]}")
    if np.any(times <= 0):
        raise DomainError("exponent fit needs positive timings")
    slope, _ = np.polyfit(np.log(lengths), np.log(times), 1)
    return float(slope)


def _time_generation(model: ReactionModel, actor: MotionSequence,
                     pose: np.ndarray, n_sequences: int, seed0: int) -> float:
    start = time.perf_counter()
    for i in range(n_sequences):
        model.generate(actor, pose, seed=seed0 + i)
    return time.perf_counter() - start


def _synthetic_actor(t: int, joint_count: int, seed: int = 0) -> MotionSequence:
    rng = np.random.default_rng(seed)
    return MotionSequence(
        frames=rng.standard_normal((t, 3 * joint_count)).astype(np.float32) * 0.3,
        joint_count=joint_count,
    )


def bench_inference(model: ReactionModel, n_sequences: int, t: int,
                    trials: int = 3, warmup: int = 1,
                    parallel: bool = False) -> TimingReport:
    """Median wall-clock time to generate n_sequences reactions of t frames.

    Single-threaded by default for clean numbers; parallel mode lifts the
    limit (capped by REACTIONMAMBA_THREADS) and is reported as such.
    """
    if trials < 3:
        raise DomainError(f"need >= 3 trials, got {trials}")
    if warmup < 1:
        raise DomainError(f"need >= 1 warmup run, got {warmup}")
    actor = _synthetic_actor(t, model.config.joint_count)
    pose = actor.frames[0]
    with threadpool_limits(limits=thread_cap(None) if parallel else 1):
        for i in range(warmup):
            model.generate(actor, pose, seed=i)
        measured = [
            _time_generation(model, actor, pose, n_sequences, seed0=1000 * (trial + 1))
            for trial in range(trials)
        ]
    total = float(np.median(measured))
    per_seq = total / n_sequences
    timing = LengthTiming(
        sequence_length=t, total_time=total, time_per_sequence=per_seq,
        frames_per_second=t / per_seq,
    )
    return TimingReport(
        variant=model.config.variant, n_sequences=n_sequences, trials=trials,
        warmup=warmup, lengths=[t], timings=[timing],
        samples=[(t, s) for s in measured],
    )


def scaling_curve(model: ReactionModel, lengths: list[int],
                  trials: int = 3, warmup: int = 1,
                  parallel: bool = False) -> TimingReport:
    """Time single-sequence generation across lengths and fit the exponent.

    Trials are interleaved across lengths (round-robin) so slow machine
    drift does not masquerade as a scaling trend; single-threaded by default.
    """
    if len(lengths) < 3:
        raise DomainError(f"scaling fit needs >= 3 lengths, got {len(lengths)}")
    lengths = sorted(lengths)
    actors = {t: _synthetic_actor(t, model.config.joint_count) for t in lengths}
    measured = {t: [] for t in lengths}
    with threadpool_limits(limits=thread_cap(None) if parallel else 1):
        for t in lengths:
            for i in range(warmup):
                model.generate(actors[t], actors[t].frames[0], seed=i)
        for trial in range(trials):
            for t in lengths:
                measured[t].append(
                    _time_generation(model, actors[t], actors[t].frames[0], 1,
                                     seed0=1000 * (trial + 1))
                )
    timings = []
    samples = []
    medians = []
    for t in lengths:
        med = float(np.median(measured[t]))
        medians.append(med)
        samples += [(t, s) for s in measured[t]]
        timings.append(
            LengthTiming(sequence_length=t, total_time=med, time_per_sequence=med,
                         frames_per_second=t / med)
        )
    exponent = fit_loglog_exponent(lengths, medians)
    return TimingReport(
        variant=model.config.variant, n_sequences=1, trials=trials, warmup=warmup,
        lengths=sorted(lengths), timings=timings, exponent=exponent, samples=samples,
    )


def bench_model_config(joint_count: int = 5, variant: str = "S1",
                       d_model: int = 128, n_layers: int = 4, seed: int = 0) -> ModelConfig:
    """Fixed-size configuration for scaling comparisons; both variants share
    everything except the block type."""
    return ModelConfig(
        joint_count=joint_count, d_model=d_model, d_z=d_model // 2,
        d_intermediate=2 * d_model, d_c=d_model // 4, n_layers=n_layers,
        n_state=16, variant=variant, seed=seed,
    )
