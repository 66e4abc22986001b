"""SVG rendering: determinism, legends, degenerate inputs."""

import numpy as np
import pytest

from reactionmamba.errors import UsageError
from reactionmamba.model import MotionSequence
from reactionmamba.plots import render_svg


def motion(seed, t=12, k=3):
    rng = np.random.default_rng(seed)
    return MotionSequence(frames=rng.standard_normal((t, 3 * k)).astype(np.float32))


class TestRenderSvg:
    def test_byte_identical_output(self):
        motions = [("a", motion(0)), ("b", motion(1))]
        assert render_svg(motions) == render_svg(motions)

    def test_legend_lists_every_input(self):
        svg = render_svg([("alpha", motion(0)), ("beta", motion(1)), ("gamma", motion(2))])
        for label in ("alpha", "beta", "gamma"):
            assert f">{label}</text>" in svg

    def test_static_sequence_renders(self):
        static = MotionSequence(frames=np.ones((6, 9), dtype=np.float32))
        svg = render_svg([("still", static)])
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    def test_skeleton_frames_mode(self):
        svg = render_svg([("a", motion(3))], mode="skeleton-frames")
        assert "<circle" in svg and "<polyline" not in svg

    def test_trajectory_mode_draws_polylines(self):
        svg = render_svg([("a", motion(4, k=2))])
        assert svg.count("<polyline") == 2

    def test_bad_mode_rejected(self):
        with pytest.raises(UsageError):
            render_svg([("a", motion(0))], mode="3d")

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            render_svg([])
