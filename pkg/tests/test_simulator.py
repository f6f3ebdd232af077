"""Scene generator and perturbation tests."""

from __future__ import annotations

import numpy as np
import pytest

from pairtrack.geometry import BBox
from pairtrack.simulator import (
    CrowdedMotion,
    GtEntry,
    LinearMotion,
    NonLinearMotion,
    SceneGroundTruth,
    SceneSpec,
    average_motion,
    generate,
    perturb_detections,
)


class TestGenerate:
    def test_deterministic(self):
        spec = SceneSpec(n_objects=5, duration=20, seed=7)
        a, b = generate(spec), generate(spec)
        for f in a.frames:
            for ea, eb in zip(a.frames[f], b.frames[f]):
                assert ea == eb

    def test_linear_constant_velocity(self):
        spec = SceneSpec(n_objects=1, duration=15, seed=3)
        scene = generate(spec)
        centers = np.array(
            [
                [scene.frames[f][0].box.cx, scene.frames[f][0].box.cy]
                for f in range(1, 16)
            ]
        )
        steps = np.diff(centers, axis=0)
        assert np.allclose(steps, steps[0], atol=1e-9)

    def test_boxes_inside_image(self):
        for motion in (
            LinearMotion(),
            NonLinearMotion(turn_rate=0.8, crossover_rate=1.0),
            CrowdedMotion(density=0.5),
        ):
            spec = SceneSpec(n_objects=8, duration=30, motion=motion, seed=11)
            scene = generate(spec)
            w, h = spec.image_size
            for f, entries in scene.frames.items():
                for e in entries:
                    x1, y1, x2, y2 = e.box.corners()
                    assert x1 >= -1e-6 and y1 >= -1e-6
                    assert x2 <= w + 1e-6 and y2 <= h + 1e-6

    def test_ids_unique_per_frame(self):
        scene = generate(SceneSpec(n_objects=6, duration=10, seed=0))
        for entries in scene.frames.values():
            ids = [e.track_id for e in entries]
            assert len(ids) == len(set(ids))

    def test_no_occlusion_all_visible(self):
        scene = generate(SceneSpec(n_objects=6, duration=10, occlusion_rate=0.0, seed=2))
        assert all(e.visible for entries in scene.frames.values() for e in entries)

    def test_occlusion_spans_contiguous(self):
        scene = generate(
            SceneSpec(n_objects=10, duration=30, occlusion_rate=1.0, seed=5)
        )
        hidden_any = False
        for i in range(1, 11):
            flags = [
                next(e.visible for e in scene.frames[f] if e.track_id == i)
                for f in range(1, 31)
            ]
            gaps = 0
            for a, b in zip(flags, flags[1:]):
                if a and not b:
                    gaps += 1
            hidden_any |= not all(flags)
            assert gaps <= 1  # one contiguous invisible span at most
        assert hidden_any

    def test_crossover_paths_intersect(self):
        spec = SceneSpec(
            n_objects=2,
            duration=40,
            motion=NonLinearMotion(turn_rate=0.3, crossover_rate=1.0),
            seed=9,
        )
        scene = generate(spec)
        min_dist = np.inf
        for f in range(1, 41):
            a, b = scene.frames[f][0].box, scene.frames[f][1].box
            min_dist = min(min_dist, np.hypot(a.cx - b.cx, a.cy - b.cy))
        max_size = max(
            max(e.box.w, e.box.h) for es in scene.frames.values() for e in es
        )
        assert min_dist < max_size

    def test_crowded_infeasible_rejected(self):
        spec = SceneSpec(
            n_objects=400,
            duration=5,
            image_size=(640, 480),
            motion=CrowdedMotion(density=0.2),
            seed=0,
        )
        with pytest.raises(ValueError):
            generate(spec)

    def test_short_duration_rejected(self):
        with pytest.raises(ValueError):
            generate(SceneSpec(n_objects=1, duration=1))


class TestPerturbDetections:
    IMG = (1000, 1000)

    def frames(self):
        rng = np.random.default_rng(0)
        return {
            f: [BBox(*rng.uniform(200, 800, 2), 50, 80) for _ in range(10)]
            for f in range(1, 6)
        }

    def test_alpha_zero_identity(self):
        frames = self.frames()
        out = perturb_detections(frames, 0.0, np.random.default_rng(1), self.IMG)
        assert out is frames

    def test_alpha_one_pure_noise(self):
        frames = self.frames()
        out = perturb_detections(frames, 1.0, np.random.default_rng(1), self.IMG)
        expected_rng = np.random.default_rng(1)
        for f in sorted(frames):
            arr = np.stack([b.as_array() for b in frames[f]]) / 1000.0
            noise = expected_rng.normal(0.5, 1 / 6, size=arr.shape)
            got = np.stack([b.as_array() for b in out[f]])
            assert np.allclose(got, noise * 1000.0)

    def test_mean_displacement_scales_with_alpha(self):
        rng = np.random.default_rng(3)
        boxes = {1: [BBox(400, 600, 60, 90) for _ in range(20000)]}
        alpha = 0.2
        out = perturb_detections(boxes, alpha, rng, self.IMG)
        base = boxes[1][0].as_array() / 1000.0
        got = np.stack([b.as_array() for b in out[1]]) / 1000.0
        measured = np.abs(got - base).mean(axis=0)
        noise = np.random.default_rng(99).normal(0.5, 1 / 6, size=(200000, 4))
        expected = alpha * np.abs(noise - base).mean(axis=0)
        assert np.allclose(measured, expected, rtol=0.05)


class TestAverageMotion:
    def make_scene(self, prev_boxes, cur_boxes, vis=None):
        vis = vis or [True] * len(prev_boxes)
        frames = {
            1: [
                GtEntry(i + 1, b, vis[i]) for i, b in enumerate(prev_boxes)
            ],
            2: [GtEntry(i + 1, b, vis[i]) for i, b in enumerate(cur_boxes)],
        }
        return SceneGroundTruth(image_size=(1000, 1000), n_frames=2, frames=frames)

    def test_static_zero(self):
        b = BBox(100, 100, 30, 40)
        scene = self.make_scene([b], [b])
        assert average_motion(scene, 2) == 0.0

    def test_full_diagonal_clamped(self):
        scene = self.make_scene(
            [BBox(100, 100, 30, 40)], [BBox(200, 200, 30, 40)]
        )
        assert average_motion(scene, 2) == 1.0

    def test_hand_computed_two_objects(self):
        # displacements 5 and 10 against diagonal 50 -> mean of 0.1 and 0.2
        prev = [BBox(100, 100, 30, 40), BBox(500, 500, 30, 40)]
        cur = [BBox(103, 104, 30, 40), BBox(506, 508, 30, 40)]
        scene = self.make_scene(prev, cur)
        assert average_motion(scene, 2) == pytest.approx(0.15, abs=1e-12)

    def test_no_covisible_zero(self):
        scene = self.make_scene(
            [BBox(100, 100, 30, 40)], [BBox(200, 200, 30, 40)], vis=[True]
        )
        scene.frames[1][0] = GtEntry(1, BBox(100, 100, 30, 40), False)
        assert average_motion(scene, 2) == 0.0
