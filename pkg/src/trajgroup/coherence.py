"""Hybrid coherent-motion labeling.

Stage one is coherent filtering: each pedestrian's invariant K nearest
neighbors over a short frame window are paired with it when their
time-averaged velocity correlation exceeds a threshold, and connected
components of those pairs become groups. Stage two runs DBSCAN on the
pedestrians stage one left unlabeled, with a neighborhood defined by
heading difference and lateral/longitudinal offsets instead of a radius.

Positions passed to the low-level functions are indexed 0..N-1 in
ascending ped_id order; all tie-breaking follows that order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError
from .trajdata import Dataset, TrajectoryWindow

NOISE = -1
LABEL_FORMAT = "trajgroup-labels"
LABEL_FORMAT_VERSION = 1


class Provenance(str, enum.Enum):
    CF = "CF"
    DBSCAN = "DBSCAN"
    NOISE = "NOISE"


@dataclass(frozen=True)
class CoherentFilterParams:
    window: int = 5  # d + 2 frames
    k_max: int = 5
    threshold: float = 0.8

    def __post_init__(self):
        if self.window < 3:
            raise ConfigError(f"coherent filter window must be >= 3 frames, got {self.window}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be >= 1, got {self.k_max}")
        if not -1.0 <= self.threshold <= 1.0:
            raise ConfigError(f"correlation threshold must lie in [-1, 1], got {self.threshold}")


@dataclass(frozen=True)
class DbscanParams:
    theta: float = 0.5  # radians
    s_lateral: float = 2.0  # meters
    s_longitudinal: float = 5.0  # meters
    min_pts: int = 2

    def __post_init__(self):
        if self.theta < 0 or self.s_lateral < 0 or self.s_longitudinal < 0:
            raise ConfigError("DBSCAN angle and distance bounds must be nonnegative")
        if self.min_pts < 1:
            raise ConfigError(f"min_pts must be >= 1, got {self.min_pts}")


# Per-dataset clustering parameters; UNIV is denser and gets a longer
# window and a tighter heading bound.
DATASET_PARAMS: dict[Dataset, tuple[CoherentFilterParams, DbscanParams]] = {
    Dataset.ETH: (CoherentFilterParams(5, 5, 0.8), DbscanParams(0.5, 2.0, 5.0, 2)),
    Dataset.HOTEL: (CoherentFilterParams(5, 5, 0.8), DbscanParams(0.5, 2.0, 5.0, 2)),
    Dataset.ZARA1: (CoherentFilterParams(5, 5, 0.8), DbscanParams(0.5, 2.0, 5.0, 2)),
    Dataset.ZARA2: (CoherentFilterParams(5, 5, 0.8), DbscanParams(0.5, 2.0, 5.0, 2)),
    Dataset.UNIV: (CoherentFilterParams(8, 5, 0.8), DbscanParams(0.2, 2.0, 5.0, 2)),
    Dataset.SYNTH: (CoherentFilterParams(5, 5, 0.8), DbscanParams(0.5, 2.0, 5.0, 2)),
}


def params_for(dataset: Dataset | str) -> tuple[CoherentFilterParams, DbscanParams]:
    return DATASET_PARAMS[Dataset.parse(dataset)]


@dataclass
class GroupLabeling:
    window_id: int
    label: dict[int, int]
    provenance: dict[int, Provenance]
    dataset: Dataset = Dataset.SYNTH

    def groups(self) -> dict[int, list[int]]:
        """Group id -> sorted member ped_ids (NOISE excluded)."""
        out: dict[int, list[int]] = {}
        for pid in sorted(self.label):
            gid = self.label[pid]
            if gid != NOISE:
                out.setdefault(gid, []).append(pid)
        return out

    @property
    def n_labeled(self) -> int:
        return sum(1 for g in self.label.values() if g != NOISE)

    @property
    def n_cf(self) -> int:
        return sum(1 for p in self.provenance.values() if p is Provenance.CF)


# ---------------------------------------------------------------------------
# Coherent filtering
# ---------------------------------------------------------------------------


def invariant_neighbors(positions: np.ndarray, k_max: int) -> list[frozenset[int]]:
    """Intersection over frames of each pedestrian's K nearest neighbors.

    ``positions`` is N x F x 2. K = min(k_max, N - 1); distance ties are
    broken by lower index.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n, n_frames = positions.shape[:2]
    k = min(k_max, n - 1)
    if k <= 0:
        return [frozenset() for _ in range(n)]
    result: list[set[int] | None] = [None] * n
    for f in range(n_frames):
        diff = positions[:, None, f, :] - positions[None, :, f, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.fill_diagonal(dist, np.inf)
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        for i in range(n):
            knn = set(order[i].tolist())
            result[i] = knn if result[i] is None else result[i] & knn
    return [frozenset(s) for s in result]


def _unit_steps(traj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vel = np.diff(traj, axis=-2)
    speed = np.linalg.norm(vel, axis=-1)
    moving = speed > 0
    unit = np.zeros_like(vel)
    np.divide(vel, speed[..., None], out=unit, where=moving[..., None])
    return unit, moving


def velocity_correlation(traj_i: np.ndarray, traj_j: np.ndarray) -> float:
    """Mean cosine between per-step velocities of two F x 2 tracks.

    A step where either pedestrian does not move contributes 0.
    """
    traj_i = np.asarray(traj_i, dtype=np.float64)
    traj_j = np.asarray(traj_j, dtype=np.float64)
    if traj_i.shape[0] < 2 or traj_i.shape != traj_j.shape:
        raise ConfigError("velocity correlation needs two equal-length tracks of >= 2 frames")
    ui, mi = _unit_steps(traj_i)
    uj, mj = _unit_steps(traj_j)
    cos = np.where(mi & mj, np.sum(ui * uj, axis=-1), 0.0)
    return float(np.clip(np.mean(cos), -1.0, 1.0))


def _components(n: int, edges: Sequence[tuple[int, int]], members: Sequence[int]) -> list[list[int]]:
    """Connected components over ``members`` ordered by smallest member."""
    parent = {m: m for m in members}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    comps: dict[int, list[int]] = {}
    for m in sorted(members):
        comps.setdefault(find(m), []).append(m)
    return sorted(comps.values(), key=lambda c: c[0])


def coherent_pairs(positions: np.ndarray, params: CoherentFilterParams) -> list[tuple[int, int]]:
    """Index pairs (i < j) that are invariant neighbors in either direction
    and whose velocity correlation exceeds the threshold."""
    positions = np.asarray(positions, dtype=np.float64)
    neigh = invariant_neighbors(positions, params.k_max)
    pairs = set()
    for i, ns in enumerate(neigh):
        for j in ns:
            pairs.add((min(i, j), max(i, j)))
    return [
        (i, j)
        for i, j in sorted(pairs)
        if velocity_correlation(positions[i], positions[j]) > params.threshold
    ]


def coherent_filter(positions: np.ndarray, params: CoherentFilterParams) -> np.ndarray:
    """Group labels (NOISE = -1) for an N x F x 2 block of positions.

    Groups are connected components of the coherent-pair graph, numbered
    from 0 in order of their lowest member index; singletons are NOISE.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n < 2:
        return labels
    comps = _components(n, coherent_pairs(positions, params), range(n))
    gid = 0
    for comp in comps:
        if len(comp) > 1:
            labels[comp] = gid
            gid += 1
    return labels


# ---------------------------------------------------------------------------
# DBSCAN refinement
# ---------------------------------------------------------------------------


def heading(traj: np.ndarray) -> np.ndarray:
    """Unit mean-velocity direction of an F x 2 track; (1, 0) when it does not move."""
    mean_vel = (traj[-1] - traj[0]) / (traj.shape[0] - 1)
    norm = math.hypot(mean_vel[0], mean_vel[1])
    if norm == 0:
        return np.array([1.0, 0.0])
    return mean_vel / norm


def angular_difference(traj_i: np.ndarray, traj_j: np.ndarray) -> float:
    """Time-averaged angle between per-step headings, in [0, pi].

    Steps where either pedestrian does not move count as pi/2, the same
    neutral value the velocity correlation gives them (cosine 0).
    """
    ui, mi = _unit_steps(np.asarray(traj_i, dtype=np.float64))
    uj, mj = _unit_steps(np.asarray(traj_j, dtype=np.float64))
    cos = np.where(mi & mj, np.clip(np.sum(ui * uj, axis=-1), -1.0, 1.0), 0.0)
    return float(np.mean(np.arccos(cos)))


def frame_offsets(traj_i: np.ndarray, traj_j: np.ndarray) -> tuple[float, float]:
    """(lateral, longitudinal) offset of j from i at the last frame, in i's heading frame."""
    h = heading(traj_i)
    d = traj_j[-1] - traj_i[-1]
    longitudinal = float(d[0] * h[0] + d[1] * h[1])
    lateral = float(-d[0] * h[1] + d[1] * h[0])
    return lateral, longitudinal


def _one_sided(traj_i: np.ndarray, traj_j: np.ndarray, params: DbscanParams) -> bool:
    lat, lon = frame_offsets(traj_i, traj_j)
    return abs(lat) <= params.s_lateral and abs(lon) <= params.s_longitudinal


def are_neighbors(traj_i: np.ndarray, traj_j: np.ndarray, params: DbscanParams) -> bool:
    """DBSCAN neighborhood predicate, required to hold in both heading frames."""
    if angular_difference(traj_i, traj_j) > params.theta:
        return False
    return _one_sided(traj_i, traj_j, params) and _one_sided(traj_j, traj_i, params)


def dbscan_refine(trajs: np.ndarray, params: DbscanParams) -> np.ndarray:
    """DBSCAN over M x F x 2 tracks with the heading/offset neighborhood.

    A point is core when its neighborhood, itself included, has at least
    ``min_pts`` members. Points are visited in index order; each unvisited
    core point seeds a cluster that grows through core neighbors. Labels
    are 0-based cluster ids, NOISE (-1) for the rest.
    """
    trajs = np.asarray(trajs, dtype=np.float64)
    m = trajs.shape[0]
    labels = np.full(m, NOISE, dtype=np.int64)
    if m == 0:
        return labels
    neigh = [[i] for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            if are_neighbors(trajs[i], trajs[j], params):
                neigh[i].append(j)
                neigh[j].append(i)
    neigh = [sorted(ns) for ns in neigh]
    core = [len(ns) >= params.min_pts for ns in neigh]

    cluster = 0
    for i in range(m):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = [i]
        while queue:
            p = queue.pop(0)
            for q in neigh[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    return labels


# ---------------------------------------------------------------------------
# Hybrid labeling
# ---------------------------------------------------------------------------


def labeling_positions(window: TrajectoryWindow, n_frames: int) -> np.ndarray:
    """The last ``n_frames`` observed positions of every pedestrian (no future frames)."""
    if n_frames > window.obs_len:
        raise ConfigError(
            f"labeling window of {n_frames} frames exceeds the {window.obs_len} observed frames"
        )
    return window.abs[:, window.obs_len - n_frames : window.obs_len]


def hybrid_label(
    window: TrajectoryWindow,
    cf: CoherentFilterParams | None = None,
    db: DbscanParams | None = None,
    use_dbscan: bool = True,
) -> GroupLabeling:
    """Coherent filtering followed by DBSCAN on its NOISE pedestrians.

    DBSCAN clusters get ids after the coherent-filter groups. With
    ``use_dbscan=False`` only the first stage runs.
    """
    default_cf, default_db = params_for(window.source_dataset)
    cf = cf or default_cf
    db = db or default_db
    pos = labeling_positions(window, cf.window)

    cf_labels = coherent_filter(pos, cf)
    labels = cf_labels.copy()
    provenance = [Provenance.CF if g != NOISE else Provenance.NOISE for g in cf_labels]
    if use_dbscan:
        rest = np.flatnonzero(cf_labels == NOISE)
        if rest.size:
            offset = int(cf_labels.max()) + 1 if (cf_labels != NOISE).any() else 0
            db_labels = dbscan_refine(pos[rest], db)
            for idx, g in zip(rest, db_labels):
                if g != NOISE:
                    labels[idx] = offset + int(g)
                    provenance[idx] = Provenance.DBSCAN

    return GroupLabeling(
        window_id=window.window_id,
        label={pid: int(g) for pid, g in zip(window.ped_ids, labels)},
        provenance={pid: p for pid, p in zip(window.ped_ids, provenance)},
        dataset=window.source_dataset,
    )


@dataclass(frozen=True)
class LabelingRates:
    cf_rate: float
    hybrid_rate: float
    n_pedestrians: int
    n_windows: int


def labeling_stats(labelings: Sequence[GroupLabeling]) -> LabelingRates:
    """Fraction of (window, pedestrian) entries labeled by CF alone and by CF + DBSCAN."""
    if not labelings:
        raise ConfigError("labeling statistics need at least one labeling")
    total = sum(len(lab.label) for lab in labelings)
    cf = sum(lab.n_cf for lab in labelings)
    hybrid = sum(lab.n_labeled for lab in labelings)
    return LabelingRates(
        cf_rate=cf / total if total else 0.0,
        hybrid_rate=hybrid / total if total else 0.0,
        n_pedestrians=total,
        n_windows=len(labelings),
    )


def labeling_stats_by_dataset(labelings: Sequence[GroupLabeling]) -> dict[Dataset, LabelingRates]:
    by_set: dict[Dataset, list[GroupLabeling]] = {}
    for lab in labelings:
        by_set.setdefault(lab.dataset, []).append(lab)
    return {ds: labeling_stats(labs) for ds, labs in by_set.items()}


# ---------------------------------------------------------------------------
# Label files
# ---------------------------------------------------------------------------


def write_labels(labelings: Sequence[GroupLabeling], path: str | Path) -> None:
    """Write labels, one ``<window_id> <ped_id> <group_id> <provenance>`` line per pedestrian.

    The first line is ``# trajgroup-labels v1 <dataset>``; group_id -1 is NOISE.
    """
    dataset = labelings[0].dataset.value if labelings else Dataset.SYNTH.value
    lines = [f"# {LABEL_FORMAT} v{LABEL_FORMAT_VERSION} {dataset}"]
    for lab in labelings:
        for pid in sorted(lab.label):
            lines.append(f"{lab.window_id} {pid} {lab.label[pid]} {lab.provenance[pid].value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels(path: str | Path) -> list[GroupLabeling]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    head = lines[0].split() if lines else []
    if head[:3] != ["#", LABEL_FORMAT, f"v{LABEL_FORMAT_VERSION}"]:
        raise ParseError(f"not a {LABEL_FORMAT} v{LABEL_FORMAT_VERSION} file", 1, str(path))
    dataset = Dataset.parse(head[3]) if len(head) > 3 else Dataset.SYNTH
    out: dict[int, GroupLabeling] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        try:
            wid, pid, gid = int(tokens[0]), int(tokens[1]), int(tokens[2])
            prov = Provenance(tokens[3])
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno, str(path)) from None
        lab = out.setdefault(wid, GroupLabeling(wid, {}, {}, dataset))
        lab.label[pid] = gid
        lab.provenance[pid] = prov
    return list(out.values())


def labels_by_window(labelings: Sequence[GroupLabeling]) -> dict[tuple[Dataset, int], GroupLabeling]:
    """Index labelings by (dataset, window_id); window ids restart per dataset."""
    return {(lab.dataset, lab.window_id): lab for lab in labelings}
