"""Numerical self-checks: gradients, clustering and Fréchet oracles, graph
invariants and ego permutation invariance.

Each check returns a :class:`CheckResult`; the acceptance tests and the
``selftest`` command run the same code with different sizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import reference
from .coherence import (
    NOISE,
    CoherentFilterParams,
    DbscanParams,
    coherent_filter,
    dbscan_refine,
    hybrid_label,
    labels_by_window,
)
from .evaluation import discrete_frechet
from .graph import build_masked_adjacency
from .model import backward, encode_batch, forward, loss_value, make_batch, make_samples, param_tensors, predict
from .params import ParameterSet
from .synthetic import random_walk_window
from .trajdata import TrajectoryWindow


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - start)


def random_scene(rng: np.random.Generator, n: int, window_id: int = 0) -> TrajectoryWindow:
    """Random-walk window of ``n`` pedestrians with steps of about 0.3 m."""
    tracks = np.cumsum(rng.normal(scale=0.3, size=(n, 20, 2)), axis=1)
    return TrajectoryWindow(window_id, tuple(range(n)), tracks)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor absorbs round-off on vanishing gradients."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(
    n_scenes: int = 20,
    seed: int = 0,
    step: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
    per_tensor: int = 12,
) -> CheckResult:
    """Analytic gradients against central differences on random scenes.

    Scenes have 2 to 6 pedestrians labeled by the hybrid clustering.
    Tensors with at most 64 entries are checked in full, larger ones at
    ``per_tensor`` random entries.
    """

    def run():
        rng = np.random.default_rng([seed, 7])
        worst, where, n_checks = 0.0, "", 0
        for s in range(n_scenes):
            w = random_scene(rng, int(rng.integers(2, 7)), s)
            batch = make_batch(make_samples([w], labels_by_window([hybrid_label(w)])))
            params = ParameterSet.initialize(seed=seed + s)
            eps = rng.standard_normal((batch.size, params.dims.z))
            grads = backward(forward(params, batch, eps))
            for name, arr in params.items():
                if arr.size <= 64:
                    entries = list(np.ndindex(arr.shape))
                else:
                    entries = [tuple(int(rng.integers(d)) for d in arr.shape) for _ in range(per_tensor)]
                for idx in entries:
                    probe = params.copy()
                    probe[name][idx] += step
                    up = loss_value(probe, batch, eps)
                    probe[name][idx] -= 2 * step
                    down = loss_value(probe, batch, eps)
                    err = relative_error(float(grads[name][idx]), (up - down) / (2 * step), floor)
                    n_checks += 1
                    if err > worst:
                        worst, where = err, f"{name}{list(idx)} scene {s}"
        return worst <= tol, f"worst relative error {worst:.2e} at {where} over {n_checks} entries"

    return _timed("gradient oracle", run)


def clustering_oracle_check(n_windows: int = 1000, seed: int = 0, max_n: int = 6) -> CheckResult:
    """``coherent_filter`` and ``dbscan_refine`` against the brute-force references.

    DBSCAN runs on every pedestrian of the window and on the ones the
    coherent filter left unlabeled with default parameters, and on every
    pedestrian with ``min_pts=3`` so that border points occur.
    """
    cf = CoherentFilterParams()
    db = DbscanParams()
    loose = DbscanParams(theta=1.0, min_pts=3)

    def run():
        rng = np.random.default_rng([seed, 11])
        mismatches = []
        for k in range(n_windows):
            w = random_walk_window(rng, int(rng.integers(1, max_n + 1)), k)
            pos = w.abs[:, w.obs_len - cf.window : w.obs_len]
            got_cf = coherent_filter(pos, cf).tolist()
            if got_cf != reference.coherent_filter(pos.tolist(), cf.k_max, cf.threshold):
                mismatches.append(f"cf window {k}")
            rest = pos[np.asarray(got_cf) == NOISE]
            for trajs, prm in ((pos, db), (rest, db), (pos, loose)):
                got = dbscan_refine(trajs, prm).tolist()
                want = reference.dbscan(trajs.tolist(), prm.theta, prm.s_lateral, prm.s_longitudinal, prm.min_pts)
                if got != want:
                    mismatches.append(f"dbscan window {k}")
        detail = f"{n_windows} windows, {len(mismatches)} mismatches"
        if mismatches:
            detail += f" (first: {mismatches[0]})"
        return not mismatches, detail

    return _timed("clustering oracle", run)


def graph_invariant_check(n_labelings: int = 1000, seed: int = 0, max_n: int = 8) -> CheckResult:
    """Row-stochasticity, NaN safety and permutation equivariance of both adjacencies."""

    def run():
        rng = np.random.default_rng([seed, 13])
        worst_sum = worst_perm = 0.0
        nan_free = True
        for _ in range(n_labelings):
            n = int(rng.integers(1, max_n + 1))
            pids = [int(p) for p in rng.choice(1000, size=n, replace=False)]
            # mix of NOISE, singleton ids and shared ids, including all-NOISE and one-group draws
            labels = {p: int(rng.integers(-1, int(rng.integers(0, n + 1)) + 1)) for p in pids}
            ego = pids[int(rng.integers(n))]
            self_loop = bool(rng.integers(2))
            adj = build_masked_adjacency(n, labels, ego, pids, self_loop)
            perm = rng.permutation(n)
            moved = build_masked_adjacency(n, labels, ego, [pids[k] for k in perm], self_loop)
            p = np.eye(n)[perm]
            for a, b in ((adj.intra, moved.intra), (adj.inter, moved.inter)):
                nan_free &= bool(np.isfinite(a).all() and np.isfinite(b).all())
                worst_sum = max(worst_sum, float(np.max(np.abs(a.sum(axis=1) - 1.0))))
                worst_perm = max(worst_perm, float(np.max(np.abs(b - p @ a @ p.T))))
        ok = nan_free and worst_sum <= 1e-12 and worst_perm <= 1e-10
        return ok, (f"{n_labelings} labelings, max |row sum - 1| {worst_sum:.1e}, "
                    f"max permutation residual {worst_perm:.1e}, finite {nan_free}")

    return _timed("graph invariants", run)


def ego_permutation_check(n_scenes: int = 50, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Reordering the non-ego pedestrians leaves the ego's GCN features and mean prediction unchanged."""

    def run():
        rng = np.random.default_rng([seed, 17])
        params = ParameterSet.initialize(seed=seed)
        p = param_tensors(params)
        worst = 0.0
        for s in range(n_scenes):
            n = int(rng.integers(2, 7))
            w = random_scene(rng, n, s)
            labels = labels_by_window([hybrid_label(w)])
            ego = int(rng.integers(n))
            others = [k for k in range(n) if k != ego]
            # shuffle the others and put the ego at a random slot among them
            shuffled = [others[k] for k in rng.permutation(len(others))]
            slot = int(rng.integers(n))
            order = shuffled[:slot] + [ego] + shuffled[slot:]
            w2 = TrajectoryWindow(s, tuple(w.ped_ids[k] for k in order), w.abs[order])
            a = [x for x in make_samples([w], labels) if x.ego == ego]
            b = [x for x in make_samples([w2], labels) if x.ego == slot]
            outs = []
            for samples in (a, b):
                batch = make_batch(samples)
                enc = encode_batch(batch, p)
                outs.append((enc.v_intra.data, enc.v_inter.data, predict(params, batch)[1]))
            for x, y in zip(*outs):
                worst = max(worst, float(np.max(np.abs(x - y))))
        return worst <= tol, f"{n_scenes} scenes, max change {worst:.1e}"

    return _timed("ego permutation invariance", run)


def frechet_oracle_check(n_pairs: int = 500, seed: int = 0, max_len: int = 6) -> CheckResult:
    """Dynamic-programming Fréchet distance against enumeration of every monotone coupling."""

    def run():
        rng = np.random.default_rng([seed, 19])
        worst = 0.0
        for _ in range(n_pairs):
            a = rng.normal(size=(int(rng.integers(1, max_len + 1)), 2))
            b = rng.normal(size=(int(rng.integers(1, max_len + 1)), 2))
            want = reference.frechet_enumerated(a.tolist(), b.tolist())
            worst = max(worst, abs(discrete_frechet(a, b) - want))
        return worst == 0.0, f"{n_pairs} pairs, max difference {worst:.1e}"

    return _timed("Fréchet oracle", run)


def run_all(quick: bool = True, seed: int = 0) -> list[CheckResult]:
    """Every check; ``quick`` shrinks the sample counts for interactive use."""
    if quick:
        return [
            gradient_check(n_scenes=2, seed=seed, per_tensor=3),
            clustering_oracle_check(100, seed),
            graph_invariant_check(200, seed),
            ego_permutation_check(10, seed),
            frechet_oracle_check(100, seed),
        ]
    return [
        gradient_check(seed=seed),
        clustering_oracle_check(seed=seed),
        graph_invariant_check(seed=seed),
        ego_permutation_check(seed=seed),
        frechet_oracle_check(seed=seed),
    ]
