import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajgroup.coherence import NOISE
from trajgroup.errors import ContractViolation
from trajgroup.graph import (
    base_adjacency,
    build_masked_adjacency,
    coherence_masks,
    format_adjacency,
    row_normalize,
)

# seven pedestrians: ego 3 shares a group with 1, 2 and 4; 5, 6, 7 walk alone
FIG_LABELS = {1: 0, 2: 0, 3: 0, 4: 0, 5: NOISE, 6: 1, 7: 1}


def test_base():
    assert base_adjacency(1).tolist() == [[1.0]]
    b = base_adjacency(3)
    assert b.tolist() == [[1.0] * 3] * 3
    with pytest.raises(ContractViolation):
        base_adjacency(0)


class TestMasks:
    def test_worked_example(self):
        intra, inter = coherence_masks(FIG_LABELS, 3, range(1, 8))
        assert intra[0].tolist() == [1, 1, 1, 1, 0, 0, 0]
        assert inter[0].tolist() == [0, 0, 1, 0, 1, 1, 1]
        assert (intra == intra[0]).all() and (inter == inter[0]).all()

    def test_lone_noise_ego(self):
        labels = {1: NOISE, 2: NOISE, 3: 0, 4: 0}
        intra, inter = coherence_masks(labels, 1, [1, 2, 3, 4])
        assert intra[0].tolist() == [1, 0, 0, 0]
        assert inter[0].tolist() == [1, 1, 1, 1]

    def test_single_group(self):
        intra, inter = coherence_masks({1: 0, 2: 0, 3: 0}, 2, [1, 2, 3])
        assert intra[0].tolist() == [1, 1, 1]
        assert inter[0].tolist() == [0, 1, 0]

    def test_without_inter_self_loop(self):
        _, inter = coherence_masks(FIG_LABELS, 3, range(1, 8), inter_self_loop=False)
        assert inter[0].tolist() == [0, 0, 0, 0, 1, 1, 1]

    def test_unknown_ego(self):
        with pytest.raises(ContractViolation):
            coherence_masks(FIG_LABELS, 9, range(1, 8))


class TestRowNormalize:
    def test_small(self):
        np.testing.assert_array_equal(row_normalize([[1, 1], [0, 1]]), [[0.5, 0.5], [0, 1]])

    def test_zero_row_fallback(self):
        out = row_normalize([[1, 2, 0], [0, 0, 0], [3, 0, 1]])
        assert out[1].tolist() == [0, 1, 0]

    def test_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rng.uniform(size=(5, 5)) * (rng.uniform(size=(5, 5)) > 0.4)
            out = row_normalize(m)
            np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=0, atol=1e-12)
            assert np.isfinite(out).all()

    def test_negative(self):
        with pytest.raises(ContractViolation):
            row_normalize([[1, -1], [0, 1]])

    def test_does_not_mutate(self):
        m = np.array([[0.0, 0.0], [2.0, 2.0]])
        row_normalize(m)
        assert m.tolist() == [[0, 0], [2, 2]]


class TestBuild:
    def test_worked_example(self):
        adj = build_masked_adjacency(7, FIG_LABELS, 3, range(1, 8))
        assert adj.ego == 2
        for row in adj.intra:
            np.testing.assert_allclose(row, [0.25] * 4 + [0] * 3, rtol=0, atol=0)
        for row in adj.inter:
            np.testing.assert_allclose(row, [0, 0, 0.25, 0, 0.25, 0.25, 0.25], rtol=0, atol=0)

    def test_single(self):
        adj = build_masked_adjacency(1, {5: NOISE}, 5)
        assert adj.intra.tolist() == [[1.0]] and adj.inter.tolist() == [[1.0]]

    def test_size_mismatch(self):
        with pytest.raises(ContractViolation):
            build_masked_adjacency(3, {1: 0, 2: 0}, 1)

    def test_format(self):
        text = format_adjacency(build_masked_adjacency(7, FIG_LABELS, 3, range(1, 8)), range(1, 8))
        assert "[intra]" in text and "0.2500" in text

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 8), st.booleans())
    def test_invariants(self, seed, n, self_loop):
        rng = np.random.default_rng(seed)
        pids = [int(p) for p in rng.choice(100, size=n, replace=False)]
        labels = {p: int(rng.integers(-1, 3)) for p in pids}
        ego = pids[int(rng.integers(n))]
        adj = build_masked_adjacency(n, labels, ego, pids, self_loop)
        e = adj.ego
        for mat in (adj.intra, adj.inter):
            assert np.isfinite(mat).all() and (mat >= 0).all()
            np.testing.assert_allclose(mat.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        # rows of the ego's group members keep their self-loop; other rows
        # never reach the ego's output
        members = adj.intra[e] > 0
        assert (np.diag(adj.intra)[members] > 0).all()
        # each non-ego column is selected by exactly one of the two masks
        others = [j for j in range(n) if j != e]
        sel = (adj.intra[e, others] > 0).astype(int) + (adj.inter[e, others] > 0).astype(int)
        assert (sel == 1).all()

        perm = rng.permutation(n)
        moved = build_masked_adjacency(n, labels, ego, [pids[k] for k in perm], self_loop)
        p = np.eye(n)[perm]
        np.testing.assert_allclose(moved.intra, p @ adj.intra @ p.T, rtol=0, atol=1e-10)
        np.testing.assert_allclose(moved.inter, p @ adj.inter @ p.T, rtol=0, atol=1e-10)
