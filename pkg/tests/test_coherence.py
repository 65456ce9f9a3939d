import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajgroup import reference as oracles
from trajgroup.coherence import (
    NOISE,
    CoherentFilterParams,
    DbscanParams,
    GroupLabeling,
    Provenance,
    angular_difference,
    are_neighbors,
    coherent_filter,
    dbscan_refine,
    frame_offsets,
    hybrid_label,
    invariant_neighbors,
    labeling_stats,
    labeling_stats_by_dataset,
    params_for,
    read_labels,
    velocity_correlation,
    write_labels,
)
from trajgroup.errors import ConfigError, ParseError
from trajgroup.synthetic import random_walk_window
from trajgroup.trajdata import Dataset, TrajectoryWindow

CF = CoherentFilterParams()
DB = DbscanParams()


def _line(start, step, n=5):
    return np.asarray(start, float) + np.arange(n)[:, None] * np.asarray(step, float)


def _partition(labels):
    groups = {}
    for i, g in enumerate(labels):
        if g != NOISE:
            groups.setdefault(g, set()).add(i)
    return {frozenset(s) for s in groups.values()}


class TestParams:
    def test_defaults_and_univ(self):
        cf, db = params_for("eth")
        assert (cf.window, cf.k_max, cf.threshold) == (5, 5, 0.8)
        assert (db.theta, db.s_lateral, db.s_longitudinal, db.min_pts) == (0.5, 2.0, 5.0, 2)
        cf, db = params_for(Dataset.UNIV)
        assert cf.window == 8 and db.theta == 0.2

    def test_invalid(self):
        with pytest.raises(ConfigError):
            CoherentFilterParams(window=2)
        with pytest.raises(ConfigError):
            DbscanParams(min_pts=0)


class TestInvariantNeighbors:
    def test_two_pedestrians(self):
        pos = np.stack([_line([0, 0], [1, 0]), _line([5, 5], [-1, 0.3])])
        assert invariant_neighbors(pos, 5) == [{1}, {0}]

    def test_single(self):
        assert invariant_neighbors(np.zeros((1, 5, 2)), 5) == [frozenset()]

    def test_lost_in_last_frame(self):
        # ped 1 is 0's nearest neighbor until ped 2 overtakes it in the final frame
        pos = np.zeros((3, 3, 2))
        pos[1, :, 0] = 1.0
        pos[2, :, 0] = [3.0, 3.0, 0.5]
        assert invariant_neighbors(pos[:, :2], 1)[0] == {1}
        assert invariant_neighbors(pos, 1)[0] == set()

    def test_random_walk_against_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            w = random_walk_window(rng, 6)
            pos = w.abs[:, :5]
            got = invariant_neighbors(pos, 2)
            want = oracles.invariant_neighbors(pos.tolist(), 2)
            assert [set(s) for s in got] == want


class TestCorrelation:
    @pytest.mark.parametrize(
        "a, b, expected",
        [((1, 0), (1, 0), 1.0), ((1, 0), (-1, 0), -1.0), ((1, 0), (0, 1), 0.0)],
    )
    def test_constant_directions(self, a, b, expected):
        assert velocity_correlation(_line([0, 0], a), _line([3, 1], b)) == pytest.approx(expected, abs=1e-15)

    def test_stationary_steps_contribute_zero(self):
        still = np.zeros((5, 2))
        assert velocity_correlation(_line([0, 0], [1, 0]), still) == 0.0

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**6))
    def test_symmetric_bounded_and_invariant(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, 5, 2))
        c = velocity_correlation(a, b)
        assert -1.0 <= c <= 1.0
        assert c == pytest.approx(velocity_correlation(b, a), abs=1e-14)
        shift = rng.normal(size=2) * 10
        assert velocity_correlation(a + shift, b + shift) == pytest.approx(c, abs=1e-12)
        t = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        assert velocity_correlation(a @ rot.T, b @ rot.T) == pytest.approx(c, abs=1e-12)


class TestCoherentFilter:
    def test_parallel_pair(self):
        pos = np.stack([_line([0, 0], [0.4, 0]), _line([0, 0.5], [0.4, 0])])
        assert coherent_filter(pos, CF).tolist() == [0, 0]

    def test_lone(self):
        assert coherent_filter(_line([0, 0], [1, 0])[None], CF).tolist() == [NOISE]

    def test_opposite(self):
        pos = np.stack([_line([0, 0], [0.4, 0]), _line([2, 0.5], [-0.4, 0])])
        assert coherent_filter(pos, CF).tolist() == [NOISE, NOISE]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 6))
    def test_matches_oracle(self, seed, n):
        w = random_walk_window(np.random.default_rng(seed), n)
        pos = w.abs[:, :5]
        assert coherent_filter(pos, CF).tolist() == oracles.coherent_filter(pos.tolist(), 5, 0.8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 6))
    def test_permutation(self, seed, n):
        rng = np.random.default_rng(seed)
        pos = random_walk_window(rng, n).abs[:, :5]
        perm = rng.permutation(n)
        base = coherent_filter(pos, CF)
        moved = coherent_filter(pos[perm], CF)
        # row k of the permuted block is original pedestrian perm[k]
        assert {frozenset(int(perm[k]) for k in g) for g in _partition(moved)} == _partition(base)


class TestDbscan:
    def test_empty(self):
        assert dbscan_refine(np.zeros((0, 5, 2)), DB).tolist() == []

    def test_side_by_side(self):
        trajs = np.stack([_line([0, 0], [0.5, 0]), _line([0, 1], [0.5, 0])])
        assert frame_offsets(trajs[0], trajs[1]) == pytest.approx((1.0, 0.0))
        assert dbscan_refine(trajs, DB).tolist() == [0, 0]

    def test_heading_gap(self):
        trajs = np.stack([_line([0, 0], [0.5, 0]), _line([0, 1], [0.5 * math.cos(1), 0.5 * math.sin(1)])])
        assert angular_difference(trajs[0], trajs[1]) == pytest.approx(1.0)
        assert dbscan_refine(trajs, DB).tolist() == [NOISE, NOISE]

    def test_predicate_is_mutual(self):
        # b is inside a's box but a is 4 m lateral in b's frame (b heads along y)
        a = _line([0, 0], [0.5, 0])
        b = _line([6, -0.5], [0, 0.5])
        lat_ab, lon_ab = frame_offsets(a, b)
        lat_ba, lon_ba = frame_offsets(b, a)
        assert abs(lat_ab) <= 2 and abs(lon_ab) <= 5
        assert not (abs(lat_ba) <= 2 and abs(lon_ba) <= 5)
        assert are_neighbors(a, b, DbscanParams(theta=3.2)) is False

    def test_stationary_heading_fallback(self):
        still = np.zeros((5, 2))
        other = np.tile([1.0, 1.5], (5, 1))
        assert frame_offsets(still, other) == pytest.approx((1.5, 1.0))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 6))
    def test_matches_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        db = DbscanParams(theta=float(rng.uniform(0.2, 1.5)), min_pts=int(rng.integers(1, 4)))
        trajs = random_walk_window(rng, max(n, 1)).abs[:n, :5] if n else np.zeros((0, 5, 2))
        want = oracles.dbscan(trajs.tolist(), db.theta, db.s_lateral, db.s_longitudinal, db.min_pts)
        assert dbscan_refine(trajs, db).tolist() == want


def _window(tracks, wid=0, dataset=Dataset.ETH):
    tracks = np.asarray(tracks, float)
    pad = np.repeat(tracks[:, :1], 3, axis=1) - (tracks[:, 1:2] - tracks[:, :1]) * np.arange(3, 0, -1)[None, :, None]
    full = np.concatenate([pad, tracks, tracks[:, -1:] + np.zeros((1, 12, 1))], axis=1)
    return TrajectoryWindow(wid, tuple(range(1, len(tracks) + 1)), full, dataset)


class TestHybrid:
    def test_two_stages(self):
        # 1, 2 walk abreast along x; 3, 4 walk along y with a single sharp
        # swerve by 4 that drops their correlation below 0.8 but keeps the
        # mean heading difference at 0.4 rad
        p1 = _line([0, 0], [0.4, 0])
        p2 = _line([0, 0.5], [0.4, 0])
        p3 = _line([-3, -3], [0, 0.4])
        steps = np.tile([0.0, 0.4], (4, 1))
        steps[3] = 0.4 * np.array([math.cos(math.pi / 2 + 1.6), math.sin(math.pi / 2 + 1.6)])
        p4 = np.concatenate([[[-2, -3]], [-2, -3] + np.cumsum(steps, axis=0)])
        assert velocity_correlation(p3, p4) < 0.8
        assert angular_difference(p3, p4) == pytest.approx(0.4)
        w = _window(np.stack([p1, p2, p3, p4]))
        lab = hybrid_label(w)
        assert lab.groups() == {0: [1, 2], 1: [3, 4]}
        assert [lab.provenance[p] for p in (1, 2, 3, 4)] == [Provenance.CF] * 2 + [Provenance.DBSCAN] * 2
        cf_only = hybrid_label(w, use_dbscan=False)
        assert cf_only.groups() == {0: [1, 2]} and cf_only.label[3] == NOISE

    def test_all_coherent_skips_dbscan(self):
        w = _window(np.stack([_line([0, y], [0.4, 0]) for y in (0, 0.6, 1.2)]))
        lab = hybrid_label(w)
        assert set(lab.provenance.values()) == {Provenance.CF}

    def test_all_noise_rate_zero(self):
        w = _window(np.stack([_line([0, 0], [0.4, 0]), _line([10, 10], [-0.4, 0])]))
        rates = labeling_stats([hybrid_label(w)])
        assert rates.cf_rate == 0 and rates.hybrid_rate == 0

    def test_short_window_rejected(self):
        w = _window(np.stack([_line([0, 0], [0.4, 0])]))
        with pytest.raises(ConfigError):
            hybrid_label(w, cf=CoherentFilterParams(window=9))

    def test_uses_only_observed_frames(self):
        rng = np.random.default_rng(5)
        w = random_walk_window(rng, 5)
        future = w.abs.copy()
        future[:, 8:] += rng.normal(scale=5, size=future[:, 8:].shape)
        w2 = TrajectoryWindow(0, w.ped_ids, future)
        assert hybrid_label(w).label == hybrid_label(w2).label

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 8))
    def test_partition_and_rate_monotone(self, seed, n):
        w = random_walk_window(np.random.default_rng(seed), n)
        hyb = hybrid_label(w)
        cf = hybrid_label(w, use_dbscan=False)
        members = [p for g in hyb.groups().values() for p in g]
        assert len(members) == len(set(members))
        assert all(len(g) >= 2 for g in hyb.groups().values())
        assert hyb.n_labeled >= cf.n_labeled
        # CF groups survive unchanged
        assert all(hyb.label[p] == cf.label[p] for p in w.ped_ids if cf.label[p] != NOISE)
        assert hybrid_label(w).label == hyb.label


class TestStatsAndFiles:
    def test_rates(self):
        a = GroupLabeling(0, {1: 0, 2: 0, 3: NOISE}, {1: Provenance.CF, 2: Provenance.CF, 3: Provenance.NOISE})
        b = GroupLabeling(1, {1: 0, 2: 0}, {1: Provenance.DBSCAN, 2: Provenance.DBSCAN})
        r = labeling_stats([a, b])
        assert (r.cf_rate, r.hybrid_rate, r.n_pedestrians, r.n_windows) == (0.4, 0.8, 5, 2)
        assert list(labeling_stats_by_dataset([a, b])) == [Dataset.SYNTH]
        with pytest.raises(ConfigError):
            labeling_stats([])

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        labs = [hybrid_label(random_walk_window(rng, 6, window_id=k)) for k in range(5)]
        write_labels(labs, tmp_path / "a.txt")
        write_labels(labs, tmp_path / "b.txt")
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
        back = read_labels(tmp_path / "a.txt")
        assert [(l.window_id, l.label, l.provenance) for l in back] == [
            (l.window_id, l.label, l.provenance) for l in labs
        ]

    def test_bad_header(self, tmp_path):
        (tmp_path / "x.txt").write_text("0 1 0 CF\n")
        with pytest.raises(ParseError):
            read_labels(tmp_path / "x.txt")
