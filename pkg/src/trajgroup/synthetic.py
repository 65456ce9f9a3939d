"""Synthetic constant-velocity scenes with planted walking groups."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .trajdata import OBS_LEN, PRED_LEN, Dataset, RawDetection, TrajectoryWindow, build_windows


@dataclass(frozen=True)
class SceneSpec:
    n_groups: tuple[int, int] = (2, 3)  # inclusive range
    group_size: tuple[int, int] = (2, 3)
    n_solo: tuple[int, int] = (0, 1)
    speed: tuple[float, float] = (0.3, 0.6)  # meters per annotated step
    member_spacing: float = 0.7  # meters between side-by-side members
    min_heading_gap: float = math.radians(60)
    arena: float = 12.0  # group centers are drawn from [-arena, arena]^2


def make_scene(
    rng: np.random.Generator,
    window_id: int = 0,
    spec: SceneSpec | None = None,
    obs_len: int = OBS_LEN,
    pred_len: int = PRED_LEN,
) -> tuple[TrajectoryWindow, list[list[int]]]:
    """One scene and its planted groups as lists of ped_ids.

    Members of a group share one velocity and walk abreast; groups and
    solo walkers get headings at least ``min_heading_gap`` apart.
    """
    spec = spec or SceneSpec()
    seq_len = obs_len + pred_len
    n_groups = int(rng.integers(spec.n_groups[0], spec.n_groups[1] + 1))
    n_solo = int(rng.integers(spec.n_solo[0], spec.n_solo[1] + 1))
    headings: list[float] = []
    while len(headings) < n_groups + n_solo:
        h = float(rng.uniform(-math.pi, math.pi))
        if all(abs(math.remainder(h - o, 2 * math.pi)) >= spec.min_heading_gap for o in headings):
            headings.append(h)

    tracks = []
    groups: list[list[int]] = []
    t = np.arange(seq_len)[:, None]
    pid = 0
    for g, h in enumerate(headings):
        size = int(rng.integers(spec.group_size[0], spec.group_size[1] + 1)) if g < n_groups else 1
        speed = float(rng.uniform(*spec.speed))
        direction = np.array([math.cos(h), math.sin(h)])
        normal = np.array([-direction[1], direction[0]])
        center = rng.uniform(-spec.arena, spec.arena, size=2)
        start = center - direction * speed * (seq_len - 1) / 2
        members = []
        for m in range(size):
            offset = (m - (size - 1) / 2) * spec.member_spacing
            tracks.append(start + normal * offset + t * (speed * direction))
            members.append(pid)
            pid += 1
        if size > 1:
            groups.append(members)
    window = TrajectoryWindow(
        window_id=window_id,
        ped_ids=tuple(range(pid)),
        abs=np.stack(tracks),
        source_dataset=Dataset.SYNTH,
        obs_len=obs_len,
        pred_len=pred_len,
    )
    return window, groups


def make_scenes(n: int, seed: int = 0, spec: SceneSpec | None = None, first_id: int = 0):
    """``n`` scenes from one seeded stream: (windows, planted groups per window)."""
    rng = np.random.default_rng(seed)
    windows, groups = [], []
    for k in range(n):
        w, g = make_scene(rng, first_id + k, spec)
        windows.append(w)
        groups.append(g)
    return windows, groups


def random_walk_window(
    rng: np.random.Generator,
    n: int,
    window_id: int = 0,
    n_frames: int = OBS_LEN + PRED_LEN,
    obs_len: int = OBS_LEN,
) -> TrajectoryWindow:
    """Loosely grouped random walkers, for property tests of the labeling stages.

    Pedestrians are split into a few flocks that share a drift; each step
    adds independent jitter so correlations spread over the whole range.
    """
    n_flocks = int(rng.integers(1, max(2, n) + 1))
    flock = rng.integers(0, n_flocks, size=n)
    drift = rng.normal(scale=0.4, size=(n_flocks, 2))
    jitter = float(rng.uniform(0.02, 0.4))
    start = rng.uniform(-4, 4, size=(n, 1, 2))
    steps = drift[flock][:, None, :] + rng.normal(scale=jitter, size=(n, n_frames - 1, 2))
    tracks = np.concatenate([start, start + np.cumsum(steps, axis=1)], axis=1)
    return TrajectoryWindow(window_id, tuple(range(n)), tracks, Dataset.SYNTH,
                            obs_len=obs_len, pred_len=n_frames - obs_len)


def scene_detections(
    rng: np.random.Generator,
    n_frames: int,
    spec: SceneSpec | None = None,
    frame_step: int = 10,
    first_ped: int = 0,
) -> tuple[list[RawDetection], list[list[int]]]:
    """One constant-velocity scene recorded for ``n_frames`` annotated frames.

    Returns the detections in annotation-file order and the planted groups
    as lists of ped_ids.
    """
    if n_frames < 2:
        raise ConfigError(f"a recording needs at least 2 frames, got {n_frames}")
    window, groups = make_scene(rng, 0, spec, obs_len=1, pred_len=n_frames - 1)
    dets = [
        RawDetection(frame_step * t, first_ped + pid, float(window.abs[k, t, 0]), float(window.abs[k, t, 1]))
        for t in range(n_frames)
        for k, pid in enumerate(window.ped_ids)
    ]
    return dets, [[first_ped + p for p in g] for g in groups]


def make_recordings(
    n_scenes: int,
    seed: int = 0,
    n_frames: int = 30,
    spec: SceneSpec | None = None,
    stride: int = 1,
) -> tuple[list[TrajectoryWindow], list[list[list[int]]]]:
    """Windows cut from ``n_scenes`` synthetic recordings, numbered consecutively.

    The second value holds the planted groups of each window's scene.
    """
    rng = np.random.default_rng(seed)
    windows: list[TrajectoryWindow] = []
    planted: list[list[list[int]]] = []
    for _ in range(n_scenes):
        dets, groups = scene_detections(rng, n_frames, spec)
        cut = build_windows(dets, stride=stride, dataset=Dataset.SYNTH, first_window_id=len(windows))
        windows.extend(cut)
        planted.extend([groups] * len(cut))
    return windows, planted
