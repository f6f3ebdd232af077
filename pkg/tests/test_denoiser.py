"""Oracle, detection-snap and fusion-reference denoiser tests."""

from __future__ import annotations

import numpy as np
import pytest

from pairtrack.denoiser import (
    DetectionSnapDenoiser,
    FrameContext,
    IdentityDenoiser,
    OracleDenoiser,
    StfWeights,
    association_score_head,
    pixel_to_signal,
    signal_to_pixel,
    stf_fuse,
)
from pairtrack.geometry import BBox, PairedBox, iou3d

IMAGE = (1000, 800)


def pairs_to_signal(rows_pix):
    return pixel_to_signal(np.asarray(rows_pix, dtype=float), IMAGE)


def cand_pixels(c):
    """Raw denoise() output is in signal space; map back to pixels."""
    return signal_to_pixel(c.pair.flatten(), IMAGE)


class TestSignalMapping:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        boxes = rng.uniform(50, 700, size=(20, 8))
        sig = pixel_to_signal(boxes, IMAGE)
        back = signal_to_pixel(sig, IMAGE)
        assert np.allclose(back, boxes)

    def test_clamping(self):
        sig = np.full((1, 8), 99.0)
        out = signal_to_pixel(sig, IMAGE)
        w, h = IMAGE
        assert np.allclose(out[0, :4], [w, h, w, h])


class TestIdentityDenoiser:
    def test_echoes_input(self):
        z = np.linspace(-1, 1, 24).reshape(3, 8)
        ctx = FrameContext(1, 2, IMAGE)
        out = IdentityDenoiser().denoise(z, 10, ctx)
        got = np.stack([c.pair.flatten() for c in out])
        assert np.allclose(got, z)
        assert all(c.assoc == 1.0 for c in out)

    @pytest.mark.parametrize("n", [1, 500, 1000])
    def test_row_count_preserved(self, n):
        z = np.zeros((n, 8))
        ctx = FrameContext(1, 2, IMAGE)
        assert len(IdentityDenoiser().denoise(z, 0, ctx)) == n


class TestOracleDenoiser:
    def ctx(self, conditional=False):
        gt_prev = [(1, BBox(200, 200, 60, 100)), (2, BBox(600, 400, 80, 80))]
        gt_cur = [(1, BBox(210, 205, 60, 100)), (2, BBox(590, 400, 80, 80))]
        return FrameContext(
            1, 2, IMAGE, gt_prev=gt_prev, gt_cur=gt_cur, conditional=conditional
        )

    def test_fidelity_one_snaps_exactly(self):
        ctx = self.ctx()
        z = pairs_to_signal(
            [
                [205, 195, 50, 90, 215, 210, 70, 110],
                [610, 390, 70, 70, 580, 410, 90, 90],
            ]
        )
        out = OracleDenoiser(1.0).denoise(z, 100, ctx)
        assert np.allclose(cand_pixels(out[0]), [200, 200, 60, 100, 210, 205, 60, 100])
        assert np.allclose(cand_pixels(out[1]), [600, 400, 80, 80, 590, 400, 80, 80])
        assert out[0].assoc >= 0.95  # near-unit score, modulated by input fit
        assert out[0].cls_prev == pytest.approx(1.0)

    def test_fidelity_zero_echoes_with_low_scores(self):
        ctx = self.ctx()
        z = pairs_to_signal([[205, 195, 50, 90, 215, 210, 70, 110]])
        out = OracleDenoiser(0.0).denoise(z, 100, ctx)
        assert np.allclose(cand_pixels(out[0]), [205, 195, 50, 90, 215, 210, 70, 110])
        assert out[0].assoc < 0.25

    def test_each_snaps_to_nearest(self):
        # Brute-force nearest-target check on a small batch.
        ctx = self.ctx()
        rng = np.random.default_rng(4)
        rows = rng.uniform(
            [100, 100, 30, 30, 100, 100, 30, 30],
            [900, 700, 120, 120, 900, 700, 120, 120],
            size=(40, 8),
        )
        targets = [
            PairedBox(BBox(200, 200, 60, 100), BBox(210, 205, 60, 100)),
            PairedBox(BBox(600, 400, 80, 80), BBox(590, 400, 80, 80)),
        ]
        out = OracleDenoiser(1.0).denoise(pairs_to_signal(rows), 100, ctx)
        for row, cand in zip(rows, out):
            row_pair = PairedBox.from_flat(row)
            overlaps = [iou3d(row_pair, t) for t in targets]
            if max(overlaps) > 0:
                expected = targets[int(np.argmax(overlaps))]
                assert np.allclose(cand_pixels(cand), expected.flatten())

    def test_missing_in_one_frame_penalized(self):
        gt_prev = [(1, BBox(200, 200, 60, 100))]
        gt_cur = []  # identity 1 vanished in the current frame
        ctx = FrameContext(1, 2, IMAGE, gt_prev=gt_prev, gt_cur=gt_cur)
        z = pairs_to_signal([[200, 200, 60, 100, 200, 200, 60, 100]])
        out = OracleDenoiser(1.0).denoise(z, 50, ctx)
        assert out[0].assoc < 0.25
        assert out[0].cls_cur < 0.25

    def test_empty_gt_all_below_gate(self):
        ctx = FrameContext(1, 2, IMAGE, gt_prev=[], gt_cur=[])
        z = pairs_to_signal(np.full((5, 8), 300.0))
        out = OracleDenoiser(1.0).denoise(z, 50, ctx)
        assert all(c.assoc < 0.25 for c in out)

    def test_low_fidelity_far_rows_below_gate(self):
        # With weak fidelity an output row stuck far from every target is
        # marked off-target.
        ctx = self.ctx()
        z = pairs_to_signal([[950, 50, 10, 10, 950, 60, 10, 10]])
        out = OracleDenoiser(0.1).denoise(z, 50, ctx)
        assert out[0].assoc < 0.25

    def test_detection_mode_prev_equals_cur(self):
        gt = [(1, BBox(300, 300, 60, 60))]
        ctx = FrameContext(5, 5, IMAGE, gt_prev=gt, gt_cur=gt)
        z = pairs_to_signal([[280, 280, 50, 50, 320, 320, 70, 70]])
        out = OracleDenoiser(1.0).denoise(z, 0, ctx)
        pix = cand_pixels(out[0])
        assert np.allclose(pix[:4], pix[4:])

    def test_conditional_mode_keeps_prev_member(self):
        ctx = self.ctx(conditional=True)
        z = pairs_to_signal([[205, 195, 50, 90, 215, 210, 70, 110]])
        out = OracleDenoiser(1.0).denoise(z, 100, ctx)
        pix = cand_pixels(out[0])
        assert np.allclose(pix[:4], [205, 195, 50, 90])  # condition untouched
        assert np.allclose(pix[4:], [210, 205, 60, 100])  # snapped

    def test_deterministic(self):
        ctx = self.ctx()
        z = pairs_to_signal(np.random.default_rng(1).uniform(100, 700, (10, 8)))
        a = OracleDenoiser(0.8).denoise(z, 30, ctx)
        b = OracleDenoiser(0.8).denoise(z, 30, ctx)
        for x, y in zip(a, b):
            assert np.allclose(x.pair.flatten(), y.pair.flatten())
            assert x.assoc == y.assoc

    def test_fidelity_range_checked(self):
        with pytest.raises(ValueError):
            OracleDenoiser(1.5)


class TestDetectionSnapDenoiser:
    def test_single_detection_pair(self):
        ctx = FrameContext(
            1, 2, IMAGE,
            det_prev=[(BBox(300, 300, 60, 60), 0.9)],
            det_cur=[(BBox(320, 300, 60, 60), 0.8)],
        )
        z = pairs_to_signal(np.tile([500.0, 500, 80, 80, 500, 500, 80, 80], (3, 1)))
        out = DetectionSnapDenoiser().denoise(z, 0, ctx)
        for c in out:
            pix = cand_pixels(c)
            assert np.allclose(pix[:4], [300, 300, 60, 60])
            assert np.allclose(pix[4:], [320, 300, 60, 60])
            assert c.cls_prev == pytest.approx(0.9)
            assert c.cls_cur == pytest.approx(0.8)

    def test_stationary_full_confidence(self):
        b = BBox(300, 300, 60, 60)
        ctx = FrameContext(1, 2, IMAGE, det_prev=[(b, 1.0)], det_cur=[(b, 1.0)])
        z = pairs_to_signal([[300, 300, 60, 60, 300, 300, 60, 60]])
        out = DetectionSnapDenoiser().denoise(z, 0, ctx)
        assert out[0].assoc == pytest.approx(1.0)

    def test_crossing_objects_resolved_by_overlap(self):
        # A at x=200 moving right, B at x=600 moving left; proposals near
        # A's prior must produce the (A_prev, A_cur) pairing.
        a_prev, a_cur = BBox(200, 300, 60, 60), BBox(260, 300, 60, 60)
        b_prev, b_cur = BBox(600, 300, 60, 60), BBox(540, 300, 60, 60)
        ctx = FrameContext(
            1, 2, IMAGE,
            det_prev=[(a_prev, 0.9), (b_prev, 0.9)],
            det_cur=[(a_cur, 0.9), (b_cur, 0.9)],
        )
        z = pairs_to_signal([[210, 300, 60, 60, 230, 300, 60, 60]])
        out = DetectionSnapDenoiser().denoise(z, 0, ctx)
        pix = cand_pixels(out[0])
        assert np.allclose(pix[:4], a_prev.as_array())
        assert np.allclose(pix[4:], a_cur.as_array())

    def test_no_detections_zero_scores(self):
        ctx = FrameContext(1, 2, IMAGE, det_prev=[], det_cur=[])
        z = pairs_to_signal([[100, 100, 50, 50, 100, 100, 50, 50]])
        out = DetectionSnapDenoiser().denoise(z, 0, ctx)
        assert out[0].assoc == 0.0
        assert np.allclose(cand_pixels(out[0]), [100, 100, 50, 50, 100, 100, 50, 50])


class TestStfReference:
    def make(self, n=4, r=49, d=16):
        rng = np.random.default_rng(9)
        return (
            rng.standard_normal((n, r, d)),
            rng.standard_normal((n, r, d)),
            rng.standard_normal((n, d)),
            rng.standard_normal((n, d)),
            StfWeights.seeded(feature_dim=d, roi_cells=r, seed=0),
        )

    def test_shape_contract(self):
        fp, fc, qp, qc, w = self.make()
        op, oc = stf_fuse(fp, fc, qp, qc, w)
        assert op.shape == (4, 16) and oc.shape == (4, 16)

    def test_zero_inputs_zero_outputs(self):
        _, _, _, _, w = self.make()
        z3 = np.zeros((4, 49, 16))
        z2 = np.zeros((4, 16))
        op, oc = stf_fuse(z3, z3, z2, z2, w)
        assert np.allclose(op, 0) and np.allclose(oc, 0)

    def test_swap_symmetry(self):
        fp, fc, qp, qc, w = self.make()
        op, oc = stf_fuse(fp, fc, qp, qc, w)
        sp, sc = stf_fuse(fc, fp, qc, qp, w)
        assert np.allclose(sp, oc) and np.allclose(sc, op)

    def test_cross_frame_sensitivity(self):
        fp, fc, qp, qc, w = self.make()
        base, _ = stf_fuse(fp, fc, qp, qc, w)
        fc2 = fc.copy()
        fc2[0, 0, 0] += 1.0
        bumped, _ = stf_fuse(fp, fc2, qp, qc, w)
        assert not np.allclose(base[0], bumped[0])

    def test_shape_mismatch_rejected(self):
        fp, fc, qp, qc, w = self.make()
        with pytest.raises(ValueError):
            stf_fuse(fp[:, :10], fc, qp, qc, w)

    def test_score_head_range_and_zero(self):
        _, _, _, _, w = self.make()
        zeros = np.zeros((6, 16))
        scores = association_score_head(zeros, zeros, w)
        assert np.allclose(scores, 0.5)
        rng = np.random.default_rng(2)
        rand = association_score_head(
            rng.standard_normal((50, 16)), rng.standard_normal((50, 16)), w
        )
        assert np.all((rand >= 0) & (rand <= 1))

    def test_score_head_rowwise(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((10, 16)), rng.standard_normal((10, 16))
        w = StfWeights.seeded(seed=1)
        scores = association_score_head(a, b, w)
        perm = rng.permutation(10)
        assert np.allclose(association_score_head(a[perm], b[perm], w), scores[perm])
