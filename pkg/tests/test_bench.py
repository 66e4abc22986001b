"""Timing harness: fit sanity on injected timings, report schema, batch linearity."""

import numpy as np
import pytest

from reactionmamba.bench import (
    bench_inference,
    bench_model_config,
    fit_loglog_exponent,
    scaling_curve,
    thread_cap,
)
from reactionmamba.errors import DomainError
from reactionmamba.model import ReactionModel


class TestExponentFit:
    def test_linear_injected_timings(self):
        lengths = [256, 512, 1024, 2048]
        times = [3e-5 * t for t in lengths]
        assert fit_loglog_exponent(lengths, times) == pytest.approx(1.0, abs=1e-9)

    def test_quadratic_injected_timings(self):
        lengths = [256, 512, 1024, 2048]
        times = [1e-8 * t * t for t in lengths]
        assert fit_loglog_exponent(lengths, times) == pytest.approx(2.0, abs=1e-9)

    def test_too_few_lengths(self):
        with pytest.raises(DomainError):
            fit_loglog_exponent([256, 512], [1.0, 2.0])


def small_model(variant="S1"):
    return ReactionModel.init(
        bench_model_config(variant=variant, d_model=16, n_layers=1)
    )


class TestBenchInference:
    def test_report_schema_and_positive_fps(self):
        report = bench_inference(small_model(), n_sequences=2, t=16, trials=3, warmup=1)
        doc = report.to_dict()
        assert doc["variant"] == "S1"
        timing = doc["timings"][0]
        assert set(timing) == {"sequence_length", "total_time", "time_per_sequence",
                               "frames_per_second"}
        assert 0 < timing["frames_per_second"] < float("inf")
        assert timing["frames_per_second"] == pytest.approx(
            timing["sequence_length"] / timing["time_per_sequence"]
        )
        md = report.markdown()
        assert "Total Time (min)" in md and "Time per Sequence (s)" in md and "FPS" in md

    def test_doubling_sequences_doubles_time(self):
        model = small_model()
        a = bench_inference(model, n_sequences=16, t=32, trials=5, warmup=2)
        b = bench_inference(model, n_sequences=32, t=32, trials=5, warmup=2)
        ratio = b.timings[0].total_time / a.timings[0].total_time
        assert 1.6 < ratio < 2.4

    def test_trial_floor(self):
        with pytest.raises(DomainError):
            bench_inference(small_model(), 1, 8, trials=2)


class TestScalingCurve:
    def test_exponent_present_and_csv(self):
        report = scaling_curve(small_model(), [16, 32, 64], trials=3, warmup=1)
        assert report.exponent is not None
        csv = report.csv()
        assert csv.splitlines()[0] == "sequence_length,seconds"
        assert len(csv.splitlines()) == 1 + 3 * 3

    def test_too_few_lengths(self):
        with pytest.raises(DomainError):
            scaling_curve(small_model(), [16, 32])


class TestThreadCap:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("REACTIONMAMBA_THREADS", "3")
        assert thread_cap() == 3
        monkeypatch.delenv("REACTIONMAMBA_THREADS")
        assert thread_cap(7) == 7
