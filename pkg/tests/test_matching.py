import numpy as np
import pytest

from calibrefine.geometry import PixelPoint
from calibrefine.matching import MatchGate, greedy_match

from conftest import naive_greedy


def points(*uv):
    return [PixelPoint(float(u), float(v)) for u, v in uv]


class TestGreedyMatchExamples:
    def test_single_admissible_pair(self):
        out = greedy_match(points((10, 10)), points((12, 10)), MatchGate(40.0))
        assert out.matches == ((0, 0, 2.0),)
        assert out.unmatched_lidar == ()
        assert out.unmatched_camera == ()

    def test_two_clean_matches(self):
        out = greedy_match(points((0, 0), (10, 0)), points((1, 0), (9, 0)), MatchGate(40.0))
        assert {(i, j) for i, j, _ in out.matches} == {(0, 0), (1, 1)}

    def test_tie_goes_to_lower_lidar_index(self):
        # both lidar points are 5 px from camera 0; camera 1 is out of gate
        out = greedy_match(points((0, 0), (10, 0)), points((5, 0), (100, 100)), MatchGate(40.0))
        assert out.matches == ((0, 0, 5.0),)
        assert out.unmatched_lidar == (1,)
        assert out.unmatched_camera == (1,)

    def test_gate_excludes_everything(self):
        out = greedy_match(points((0, 0)), points((100, 100)), MatchGate(40.0))
        assert out.matches == ()
        assert out.unmatched_lidar == (0,)
        assert out.unmatched_camera == (0,)

    def test_empty_inputs(self):
        out = greedy_match([], points((1, 1)), MatchGate(40.0))
        assert out.matches == () and out.unmatched_camera == (0,)
        out = greedy_match(points((1, 1)), [], MatchGate(40.0))
        assert out.matches == () and out.unmatched_lidar == (0,)

    def test_gate_validation(self):
        with pytest.raises(ValueError):
            MatchGate(0.0)


class TestGreedyMatchProperties:
    @pytest.mark.parametrize("seed", range(50))
    def test_equals_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n_l, n_c = int(rng.integers(0, 7)), int(rng.integers(0, 7))
        proj = points(*(rng.uniform(0, 100, size=2) for _ in range(n_l)))
        dets = points(*(rng.uniform(0, 100, size=2) for _ in range(n_c)))
        gate = MatchGate(float(rng.uniform(5, 80)))
        out = greedy_match(proj, dets, gate)

        if n_l and n_c:
            costs = np.array([[np.hypot(p.u - d.u, p.v - d.v) for d in dets] for p in proj])
            expected = naive_greedy(costs, gate.max_distance)
            assert [(i, j) for i, j, _ in out.matches] == [(i, j) for i, j, _ in expected]
            assert np.allclose([c for *_, c in out.matches], [c for *_, c in expected])
        else:
            assert out.matches == ()

    @pytest.mark.parametrize("seed", range(20))
    def test_partial_injection_and_gate_soundness(self, seed):
        rng = np.random.default_rng(100 + seed)
        proj = points(*(rng.uniform(0, 200, size=2) for _ in range(12)))
        dets = points(*(rng.uniform(0, 200, size=2) for _ in range(9)))
        gate = MatchGate(50.0)
        out = greedy_match(proj, dets, gate)

        lidar_seen = [i for i, _, _ in out.matches]
        camera_seen = [j for _, j, _ in out.matches]
        assert len(set(lidar_seen)) == len(lidar_seen)
        assert len(set(camera_seen)) == len(camera_seen)
        assert all(c <= gate.max_distance for *_, c in out.matches)
        assert sorted(lidar_seen + list(out.unmatched_lidar)) == list(range(12))
        assert sorted(camera_seen + list(out.unmatched_camera)) == list(range(9))

    def test_greedy_step_optimality_by_replay(self):
        rng = np.random.default_rng(321)
        proj = points(*(rng.uniform(0, 300, size=2) for _ in range(10)))
        dets = points(*(rng.uniform(0, 300, size=2) for _ in range(10)))
        gate = MatchGate(120.0)
        out = greedy_match(proj, dets, gate)

        costs = np.array([[np.hypot(p.u - d.u, p.v - d.v) for d in dets] for p in proj])
        free_l, free_c = set(range(10)), set(range(10))
        for i, j, c in out.matches:
            admissible = [
                costs[a, b] for a in free_l for b in free_c if costs[a, b] <= gate.max_distance
            ]
            assert c <= min(admissible) + 1e-12
            free_l.remove(i)
            free_c.remove(j)

    def test_permutation_covariance(self):
        rng = np.random.default_rng(55)
        proj = points(*(rng.uniform(0, 100, size=2) for _ in range(6)))
        dets = points(*(rng.uniform(0, 100, size=2) for _ in range(6)))
        gate = MatchGate(200.0)
        base = greedy_match(proj, dets, gate)

        perm_l = list(rng.permutation(6))
        perm_c = list(rng.permutation(6))
        out = greedy_match([proj[i] for i in perm_l], [dets[j] for j in perm_c], gate)
        remapped = {(perm_l.index(i), perm_c.index(j)) for i, j, _ in base.matches}
        assert {(i, j) for i, j, _ in out.matches} == remapped
