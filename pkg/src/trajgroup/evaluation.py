"""Displacement metrics, best-of-N evaluation and Fréchet group-similarity reports."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .coherence import NOISE, GroupLabeling, labels_by_window
from .errors import ConfigError, ContractViolation
from .model import EgoSample, make_batch, predict
from .params import ParameterSet
from .trajdata import Dataset, TrajectoryWindow

# ADE/FDE (meters) of the full group-aware model with hybrid labels, for comparison only.
REFERENCE_ADE_FDE: dict[str, tuple[float, float]] = {
    "ETH": (0.70, 1.26),
    "HOTEL": (0.37, 0.75),
    "UNIV": (0.53, 1.16),
    "ZARA1": (0.34, 0.71),
    "ZARA2": (0.31, 0.67),
    "AVG": (0.45, 0.91),
}

# Labeled share of pedestrians: (coherent filtering alone, with DBSCAN).
REFERENCE_LABEL_RATES: dict[str, tuple[float, float]] = {
    "ETH": (0.410, 0.773),
    "HOTEL": (0.124, 0.776),
    "UNIV": (0.350, 0.806),
    "ZARA1": (0.389, 0.839),
    "ZARA2": (0.456, 0.891),
}

# Mean discrete Fréchet distance (m): (CF intra, CF inter, hybrid intra, hybrid inter).
REFERENCE_FRECHET: dict[str, tuple[float, float, float, float]] = {
    "ETH": (3.58, 7.30, 3.21, 8.59),
    "HOTEL": (4.10, 5.08, 2.90, 5.69),
    "UNIV": (2.82, 7.28, 2.54, 7.67),
    "ZARA1": (3.60, 5.59, 2.73, 7.64),
    "ZARA2": (3.57, 5.37, 1.70, 6.06),
    "AVG": (3.53, 6.12, 2.62, 7.13),
}


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    ade: float
    fde: float
    n_samples: int
    n_windows: int
    n_pairs: int


def displacement_errors(pred_abs: np.ndarray, gt_abs: np.ndarray) -> tuple[float, float]:
    """(ADE, FDE): mean and final Euclidean distance over the predicted steps."""
    pred_abs = np.asarray(pred_abs, dtype=np.float64)
    gt_abs = np.asarray(gt_abs, dtype=np.float64)
    if pred_abs.shape != gt_abs.shape or pred_abs.ndim != 2 or pred_abs.shape[1] != 2:
        raise ContractViolation(f"expected matching T x 2 tracks, got {pred_abs.shape} and {gt_abs.shape}")
    dist = np.linalg.norm(pred_abs - gt_abs, axis=-1)
    return float(dist.mean()), float(dist[-1])


def sample_noise(n: int, n_pairs: int, zdim: int, seed: int) -> np.ndarray:
    """(n, n_pairs, zdim) noise; draw ``s`` depends only on (seed, s), so
    smaller ``n`` gives a prefix of the same draws."""
    return np.stack([np.random.default_rng([seed, s]).standard_normal((n_pairs, zdim)) for s in range(n)])


def best_of_n(
    params: ParameterSet,
    samples: Sequence[EgoSample],
    n: int = 20,
    seed: int = 0,
    mean_mode: bool = False,
    batch_size: int = 256,
    dataset: str = "",
) -> EvalReport:
    """Mean over (window, ego) pairs of the lowest-ADE prediction among ``n`` draws.

    The FDE reported for a pair is the FDE of its lowest-ADE draw.
    ``mean_mode`` decodes the latent mean once instead of sampling.
    """
    if n < 1:
        raise ConfigError(f"best-of-n needs n >= 1, got {n}")
    if not samples:
        raise ConfigError("nothing to evaluate")
    ade, fde = per_pair_errors(params, samples, n, seed, mean_mode, batch_size)
    return EvalReport(
        dataset=dataset,
        ade=float(np.mean(ade)),
        fde=float(np.mean(fde)),
        n_samples=1 if mean_mode else n,
        n_windows=len({id(s.window) for s in samples}),
        n_pairs=len(samples),
    )


def per_pair_errors(
    params: ParameterSet,
    samples: Sequence[EgoSample],
    n: int = 20,
    seed: int = 0,
    mean_mode: bool = False,
    batch_size: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Best-of-n (ADE, FDE) arrays, one entry per sample."""
    noise = None if mean_mode else sample_noise(n, len(samples), params.dims.z, seed)
    ades, fdes = [], []
    for start in range(0, len(samples), batch_size):
        batch = make_batch(samples[start : start + batch_size])
        eps = None if noise is None else noise[:, start : start + batch.size]
        _, pred_abs = predict(params, batch, eps)
        if pred_abs.ndim == 3:
            pred_abs = pred_abs[None]
        dist = np.linalg.norm(pred_abs - batch.gt_abs[None], axis=-1)  # (S, K, T)
        ade_s = dist.mean(axis=-1)
        best = np.argmin(ade_s, axis=0)
        cols = np.arange(batch.size)
        ades.append(ade_s[best, cols])
        fdes.append(dist[best, cols, -1])
    return np.concatenate(ades), np.concatenate(fdes)


# ---------------------------------------------------------------------------
# Discrete Fréchet distance
# ---------------------------------------------------------------------------


def discrete_frechet(traj_a: np.ndarray, traj_b: np.ndarray) -> float:
    """Discrete Fréchet distance between two point sequences (Eiter & Mannila)."""
    a = np.asarray(traj_a, dtype=np.float64)
    b = np.asarray(traj_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ContractViolation("discrete Fréchet distance needs nonempty trajectories")
    # math.dist per point pair, so the result is bit-identical to evaluating any single coupling
    d = np.array([[math.dist(u, v) for v in b.tolist()] for u in a.tolist()])
    p, q = d.shape
    ca = np.empty((p, q))
    ca[0, 0] = d[0, 0]
    for i in range(1, p):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
    for j in range(1, q):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, p):
        for j in range(1, q):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[-1, -1])


@dataclass(frozen=True)
class GroupSimilarity:
    intra_avg: float | None  # None when the dataset has no same-group pair
    inter_avg: float | None
    n_intra: int
    n_inter: int


def group_similarity(
    windows: Sequence[TrajectoryWindow],
    labelings: Mapping | Sequence[GroupLabeling],
    segment: str = "full",
) -> GroupSimilarity:
    """Mean Fréchet distance over same-group and cross-group pedestrian pairs.

    NOISE pedestrians count as singleton groups, so any pair involving one
    is a cross-group pair. ``segment`` selects the compared part of each
    track: ``"full"``, ``"obs"`` or ``"pred"``.
    """
    if not isinstance(labelings, Mapping):
        labelings = labels_by_window(labelings)
    intra: list[float] = []
    inter: list[float] = []
    for w in windows:
        lab = labelings.get((w.source_dataset, w.window_id))
        if lab is None:
            raise ContractViolation(f"no labels for window {w.window_id} of {w.source_dataset.value}")
        tracks = {"full": w.abs, "obs": w.obs_abs, "pred": w.pred_abs}[segment]
        for i, j in itertools.combinations(range(w.n_peds), 2):
            gi, gj = lab.label[w.ped_ids[i]], lab.label[w.ped_ids[j]]
            dist = discrete_frechet(tracks[i], tracks[j])
            if gi != NOISE and gi == gj:
                intra.append(dist)
            else:
                inter.append(dist)
    return GroupSimilarity(
        intra_avg=float(np.mean(intra)) if intra else None,
        inter_avg=float(np.mean(inter)) if inter else None,
        n_intra=len(intra),
        n_inter=len(inter),
    )


def group_similarity_report(
    windows: Sequence[TrajectoryWindow],
    labelings: Sequence[GroupLabeling],
    segment: str = "full",
) -> dict[Dataset, GroupSimilarity]:
    """:func:`group_similarity` per dataset."""
    by_key = labels_by_window(labelings)
    by_set: dict[Dataset, list[TrajectoryWindow]] = {}
    for w in windows:
        by_set.setdefault(w.source_dataset, []).append(w)
    return {ds: group_similarity(ws, by_key, segment) for ds, ws in by_set.items()}


# ---------------------------------------------------------------------------
# Text tables
# ---------------------------------------------------------------------------


def _fmt(v: float | None, spec: str = ".3f") -> str:
    return "-" if v is None else format(v, spec)


def format_eval_table(reports: Sequence[EvalReport]) -> str:
    """ADE/FDE per dataset with the published full-model values alongside."""
    lines = ["# dataset\tade\tfde\tn_samples\tn_windows\tn_pairs\tref_ade\tref_fde"]
    for r in reports:
        ref = REFERENCE_ADE_FDE.get(r.dataset, (None, None))
        lines.append(
            f"{r.dataset}\t{r.ade:.4f}\t{r.fde:.4f}\t{r.n_samples}\t{r.n_windows}\t{r.n_pairs}\t"
            f"{_fmt(ref[0], '.2f')}\t{_fmt(ref[1], '.2f')}"
        )
    if len(reports) > 1:
        ade = float(np.mean([r.ade for r in reports]))
        fde = float(np.mean([r.fde for r in reports]))
        ref = REFERENCE_ADE_FDE["AVG"]
        lines.append(f"AVG\t{ade:.4f}\t{fde:.4f}\t-\t-\t-\t{ref[0]:.2f}\t{ref[1]:.2f}")
    return "\n".join(lines) + "\n"


def format_label_rate_table(rates: Mapping) -> str:
    lines = ["# dataset\tcf_rate\thybrid_rate\tn_pedestrians\tn_windows\tref_cf\tref_hybrid"]
    for ds, r in rates.items():
        name = ds.value if isinstance(ds, Dataset) else str(ds)
        ref = REFERENCE_LABEL_RATES.get(name, (None, None))
        lines.append(
            f"{name}\t{100 * r.cf_rate:.1f}%\t{100 * r.hybrid_rate:.1f}%\t{r.n_pedestrians}\t{r.n_windows}\t"
            f"{'-' if ref[0] is None else f'{100 * ref[0]:.1f}%'}\t"
            f"{'-' if ref[1] is None else f'{100 * ref[1]:.1f}%'}"
        )
    return "\n".join(lines) + "\n"


def format_frechet_table(cf: Mapping, hybrid: Mapping) -> str:
    lines = ["# dataset\tcf_intra\tcf_inter\thybrid_intra\thybrid_inter\tref_cf_intra\tref_cf_inter\tref_hybrid_intra\tref_hybrid_inter"]
    for ds in hybrid:
        name = ds.value if isinstance(ds, Dataset) else str(ds)
        c, h = cf.get(ds), hybrid[ds]
        ref = REFERENCE_FRECHET.get(name, (None,) * 4)
        lines.append(
            "\t".join(
                [name, _fmt(c.intra_avg if c else None, ".2f"), _fmt(c.inter_avg if c else None, ".2f"),
                 _fmt(h.intra_avg, ".2f"), _fmt(h.inter_avg, ".2f")]
                + [_fmt(v, ".2f") for v in ref]
            )
        )
    return "\n".join(lines) + "\n"
