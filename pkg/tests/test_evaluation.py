import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajgroup import reference
from trajgroup.coherence import GroupLabeling, Provenance, hybrid_label, labeling_stats_by_dataset
from trajgroup.errors import ConfigError, ContractViolation
from trajgroup.evaluation import (
    REFERENCE_ADE_FDE,
    EvalReport,
    best_of_n,
    discrete_frechet,
    displacement_errors,
    format_eval_table,
    format_frechet_table,
    format_label_rate_table,
    group_similarity,
    group_similarity_report,
    per_pair_errors,
    sample_noise,
)
from trajgroup.model import make_batch, make_samples, predict
from trajgroup.params import ParameterSet
from trajgroup.synthetic import make_scenes
from trajgroup.trajdata import Dataset, TrajectoryWindow


class TestDisplacement:
    def test_exact(self):
        gt = np.random.default_rng(0).normal(size=(12, 2))
        assert displacement_errors(gt, gt) == (0.0, 0.0)

    def test_constant_offset(self):
        gt = np.random.default_rng(0).normal(size=(12, 2))
        ade, fde = displacement_errors(gt + [1.0, 0.0], gt)
        assert ade == pytest.approx(1.0, abs=1e-15) and fde == pytest.approx(1.0, abs=1e-15)

    def test_linear_growth(self):
        gt = np.zeros((12, 2))
        pred = np.stack([0.1 * np.arange(1, 13), np.zeros(12)], axis=1)
        ade, fde = displacement_errors(pred, gt)
        assert ade == pytest.approx(0.65, abs=1e-15) and fde == pytest.approx(1.2, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            displacement_errors(np.zeros((12, 2)), np.zeros((11, 2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_translation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, 12, 2))
        shift = rng.normal(size=2) * 50
        np.testing.assert_allclose(displacement_errors(a + shift, b + shift), displacement_errors(a, b), atol=1e-12)


@pytest.fixture(scope="module")
def eval_setup():
    windows, _ = make_scenes(4, seed=8)
    return ParameterSet.initialize(seed=1), make_samples(windows)


class TestBestOfN:
    def test_rejects_zero(self, eval_setup):
        params, samples = eval_setup
        with pytest.raises(ConfigError):
            best_of_n(params, samples, n=0)

    def test_single_draw(self, eval_setup):
        params, samples = eval_setup
        report = best_of_n(params, samples, n=1, seed=3)
        batch = make_batch(samples)
        _, pred = predict(params, batch, sample_noise(1, len(samples), 8, 3))
        ades = [displacement_errors(pred[0, k], batch.gt_abs[k])[0] for k in range(batch.size)]
        assert report.ade == pytest.approx(np.mean(ades), rel=1e-12)
        assert report.n_pairs == len(samples) and report.n_windows == 4

    def test_nested_draws_monotone(self, eval_setup):
        params, samples = eval_setup
        ades = [per_pair_errors(params, samples, n, seed=2)[0] for n in (1, 3, 10, 20)]
        for small, large in zip(ades, ades[1:]):
            assert np.all(large <= small)

    def test_batching_irrelevant(self, eval_setup):
        params, samples = eval_setup
        a = best_of_n(params, samples, n=5, seed=1, batch_size=3)
        b = best_of_n(params, samples, n=5, seed=1, batch_size=256)
        assert a.ade == pytest.approx(b.ade, rel=1e-12) and a.fde == pytest.approx(b.fde, rel=1e-12)

    def test_mean_mode_deterministic(self, eval_setup):
        params, samples = eval_setup
        a = best_of_n(params, samples, n=1, mean_mode=True)
        b = best_of_n(params, samples, n=1, mean_mode=True, seed=99)
        assert a == b and a.n_samples == 1


class TestFrechet:
    def test_identical(self):
        a = np.random.default_rng(0).normal(size=(7, 2))
        assert discrete_frechet(a, a) == 0.0

    def test_parallel_lines(self):
        a = np.stack([np.arange(10.0), np.zeros(10)], axis=1)
        assert discrete_frechet(a, a + [0.0, 2.5]) == 2.5

    def test_empty(self):
        with pytest.raises(ContractViolation):
            discrete_frechet(np.zeros((0, 2)), np.zeros((3, 2)))

    def test_against_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            a = rng.normal(size=(int(rng.integers(1, 6)), 2))
            b = rng.normal(size=(int(rng.integers(1, 6)), 2))
            assert discrete_frechet(a, b) == reference.frechet_enumerated(a.tolist(), b.tolist())

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 12))
    def test_metric_bounds(self, seed, n):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, n, 2))
        d = discrete_frechet(a, b)
        assert d == discrete_frechet(b, a)
        pointwise = np.linalg.norm(a - b, axis=1)
        assert max(pointwise[0], pointwise[-1]) - 1e-12 <= d <= pointwise.max() + 1e-12


def _lab(wid, labels, dataset=Dataset.SYNTH):
    return GroupLabeling(wid, labels, {p: Provenance.CF for p in labels}, dataset)


class TestGroupSimilarity:
    def test_single_group(self):
        track = np.cumsum(np.ones((20, 2)), axis=0)
        w = TrajectoryWindow(0, (1, 2), np.stack([track, track]))
        sim = group_similarity([w], [_lab(0, {1: 0, 2: 0})])
        assert sim.intra_avg == 0.0 and sim.inter_avg is None and sim.n_inter == 0

    def test_noise_pairs_are_inter(self):
        w = TrajectoryWindow(0, (1, 2), np.zeros((2, 20, 2)))
        sim = group_similarity([w], [_lab(0, {1: -1, 2: -1})])
        assert sim.intra_avg is None and sim.inter_avg == 0.0

    def test_missing_labels(self):
        w = TrajectoryWindow(0, (1, 2), np.zeros((2, 20, 2)))
        with pytest.raises(ContractViolation):
            group_similarity([w], [_lab(5, {1: 0, 2: 0})])

    def test_planted_groups_are_closer(self):
        windows, _ = make_scenes(40, seed=3)
        labels = [hybrid_label(w) for w in windows]
        report = group_similarity_report(windows, labels)
        sim = report[Dataset.SYNTH]
        assert sim.n_intra > 0 and sim.intra_avg < sim.inter_avg


def test_tables():
    text = format_eval_table([EvalReport("HOTEL", 0.5, 1.0, 20, 3, 9), EvalReport("ETH", 0.7, 1.4, 20, 2, 4)])
    assert "HOTEL\t0.5000\t1.0000\t20\t3\t9\t0.37\t0.75" in text
    assert text.strip().splitlines()[-1].startswith("AVG\t0.6000\t1.2000")
    assert REFERENCE_ADE_FDE["AVG"] == (0.45, 0.91)

    windows, _ = make_scenes(3, seed=1)
    labs = [hybrid_label(w) for w in windows]
    assert "SYNTH" in format_label_rate_table(labeling_stats_by_dataset(labs))
    sim = group_similarity_report(windows, labs)
    assert format_frechet_table(sim, sim).count("\n") == 2
