"""Point-cloud distances against brute-force oracles, and scene scoring.

Hand computations used below:
  chamfer({0},{1}) with P={(0,0,0)}, Q={(1,0,0)}:
      CD = 1/2 * (1 + 1) = 1.0
  chamfer(P={(0,0,0),(2,0,0)}, Q={(1,0,0)}):
      mean_P = (1 + 1)/2 = 1; mean_Q = 1 -> CD = 1/2 * (1 + 1) = 1.0
"""

import dataclasses
import itertools

import numpy as np
import pytest

from conftest import random_transform

from slotfit.errors import InputError
from slotfit.masks import BinaryMask
from slotfit.metrics import (
    build_report,
    chamfer,
    emd,
    score_multislot,
    score_scene,
)
from slotfit.placement import compute_placements
from slotfit.registration import RansacParams
from slotfit.synth import SynthParams, generate_scene


def brute_force_chamfer(p, q):
    d2 = np.sum((p[:, None, :] - q[None, :, :]) ** 2, axis=2)
    return 0.5 * (d2.min(axis=1).mean() + d2.min(axis=0).mean())


def brute_force_emd(p, q):
    n = len(p)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(p[i] - q[perm[i]]) for i in range(n))
        best = min(best, cost)
    return best / n


class TestChamfer:
    def test_equal_clouds_zero(self, rng):
        pts = rng.normal(size=(40, 3))
        assert chamfer(pts, pts) == 0.0

    def test_single_pair(self):
        assert chamfer(np.array([[0.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])) == 1.0

    def test_two_vs_one(self):
        p = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        q = np.array([[1.0, 0.0, 0.0]])
        assert chamfer(p, q) == pytest.approx(1.0)

    def test_empty_raises(self):
        with pytest.raises(InputError):
            chamfer(np.zeros((0, 3)), np.ones((1, 3)))

    def test_matches_brute_force(self, rng):
        for n, m in [(10, 17), (100, 80), (500, 450)]:
            p = rng.normal(size=(n, 3))
            q = rng.normal(size=(m, 3))
            assert chamfer(p, q) == pytest.approx(brute_force_chamfer(p, q), abs=1e-12)

    def test_symmetric(self, rng):
        p = rng.normal(size=(30, 3))
        q = rng.normal(size=(20, 3))
        assert chamfer(p, q) == chamfer(q, p)

    def test_rigid_motion_invariance(self, rng):
        p = rng.normal(size=(50, 3))
        q = rng.normal(size=(60, 3))
        base = chamfer(p, q)
        for _ in range(5):
            t = random_transform(rng)
            moved = chamfer(t.apply_points(p), t.apply_points(q))
            assert moved == pytest.approx(base, abs=1e-9)


class TestEmd:
    def test_equal_multisets_zero(self, rng):
        pts = rng.normal(size=(25, 3))
        # subsample == size: resampling is a permutation, so exactly zero
        assert emd(pts, pts, subsample=25, seed=3) == 0.0

    def test_permuted_equal_multiset_zero(self):
        p = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        q = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert emd(p, q, subsample=2, seed=0) == 0.0

    def test_single_assignment(self):
        assert emd(
            np.array([[0.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]), subsample=1
        ) == pytest.approx(1.0)

    def test_empty_raises(self):
        with pytest.raises(InputError):
            emd(np.zeros((0, 3)), np.ones((1, 3)), subsample=4)

    def test_bad_subsample(self, rng):
        with pytest.raises(InputError):
            emd(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), subsample=0)

    def test_matches_permutation_enumeration(self, rng):
        # exact agreement with brute force for every size up to 7
        for n in range(1, 8):
            for _ in range(3):
                p = rng.normal(size=(n, 3))
                q = rng.normal(size=(n, 3))
                got = emd(p, q, subsample=n, seed=11)
                assert got == pytest.approx(brute_force_emd(p, q), abs=1e-12)

    def test_symmetric_at_full_subsample(self, rng):
        p = rng.normal(size=(12, 3))
        q = rng.normal(size=(12, 3))
        assert emd(p, q, subsample=12, seed=5) == pytest.approx(
            emd(q, p, subsample=12, seed=5), abs=1e-12
        )

    def test_deterministic(self, rng):
        p = rng.normal(size=(40, 3))
        q = rng.normal(size=(50, 3))
        assert emd(p, q, subsample=16, seed=9) == emd(p, q, subsample=16, seed=9)

    def test_upsamples_small_clouds(self, rng):
        p = rng.normal(size=(3, 3))
        q = rng.normal(size=(5, 3))
        value = emd(p, q, subsample=8, seed=0)
        assert value >= 0.0


class TestScoreScene:
    def test_perfect_prediction(self):
        scene = generate_scene(SynthParams(seed=21, n_slots=2))
        placements = compute_placements(scene, RansacParams(seed=4))
        n = len(scene.ground_truth.post_cloud)
        score = score_scene(placements, scene, emd_subsample=n, emd_seed=0)
        assert score.obj_iou == 1.0
        assert score.slot_iou == 1.0
        assert score.transform_precision == 1.0
        assert score.chamfer == pytest.approx(0.0, abs=1e-12)
        assert score.emd == pytest.approx(0.0, abs=1e-12)
        assert not score.used_fallback
        assert score.multislot.mean_iou == 1.0
        assert score.multislot.average_precision == 1.0

    def test_absent_prediction_scores_fallback(self):
        scene = generate_scene(SynthParams(seed=22, n_slots=1))
        score = score_scene(None, scene)
        assert score.used_fallback
        assert score.obj_iou == 0.0
        assert score.slot_iou == 0.0
        assert score.transform_precision == 0.0

    def test_no_ground_truth_raises(self):
        scene = generate_scene(SynthParams(seed=23, n_slots=1))
        bare = dataclasses.replace(scene, ground_truth=None)
        with pytest.raises(InputError):
            score_scene(None, bare)


class TestScoreMultislot:
    def make(self, pixels, width=6, height=6):
        bits = np.zeros((height, width), dtype=bool)
        for u, v in pixels:
            bits[v, u] = True
        return BinaryMask(bits)

    def test_identical_predictions(self):
        gt = [self.make([(0, 0)]), self.make([(3, 3)]), self.make([(5, 5)])]
        score = score_multislot(gt, gt)
        assert score.mean_iou == 1.0
        assert score.average_precision == 1.0
        assert score.matched == 3

    def test_one_perfect_of_two(self):
        # 2 GT slots, 1 perfect prediction -> mean IoU (1 + 0)/2 = 0.5
        gt = [self.make([(0, 0)]), self.make([(3, 3)])]
        score = score_multislot([gt[0]], gt)
        assert score.mean_iou == 0.5
        assert score.average_precision == 1.0
        assert score.matched == 1

    def test_extra_prediction_penalized(self):
        gt = [self.make([(0, 0)])]
        preds = [gt[0], self.make([(5, 5)])]
        score = score_multislot(preds, gt)
        assert score.mean_iou == 0.5

    def test_greedy_takes_best_pairs(self):
        gt = [self.make([(0, 0), (1, 0)]), self.make([(4, 4)])]
        # first prediction overlaps gt0 with IoU 1/3, second exactly gt0
        preds = [self.make([(1, 0), (2, 0)]), self.make([(0, 0), (1, 0)])]
        score = score_multislot(preds, gt)
        # greedy: pred1<->gt0 at 1.0; pred0 has no overlap with gt1 -> unmatched
        assert score.matched == 1
        assert score.mean_iou == pytest.approx(0.5)

    def test_no_predictions(self):
        score = score_multislot([], [self.make([(0, 0)])])
        assert score.mean_iou == 0.0
        assert score.average_precision == 0.0


class TestReportAggregation:
    def test_aggregate_is_mean_of_records(self):
        scenes = []
        for seed in (31, 32, 33):
            scene = generate_scene(SynthParams(seed=seed, n_slots=1))
            placements = compute_placements(scene, RansacParams(seed=seed))
            scenes.append(score_scene(placements, scene, emd_subsample=64))
        report = build_report(scenes, [], {"emd_subsample": 64})
        for field in ("obj_iou", "slot_iou", "transform_precision", "chamfer", "emd"):
            expected = float(np.mean([getattr(s, field) for s in scenes]))
            assert report.aggregate[field] == expected
        assert report.scene_count == 3
        assert report.aggregate["fallback_rate"] == 0.0
