"""Annotation parsing, prediction windows and leave-one-out splits.

Annotation files hold one detection per line, ``frame_id ped_id x y`` in
world meters, whitespace separated. Windows are 20 annotated steps long
(8 observed, 12 predicted) and contain only pedestrians seen at every step.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DuplicateRecordError, ParseError

logger = logging.getLogger(__name__)

OBS_LEN = 8
PRED_LEN = 12
WINDOW_FORMAT = "trajgroup-windows"
WINDOW_FORMAT_VERSION = 1


class Dataset(str, enum.Enum):
    ETH = "ETH"
    HOTEL = "HOTEL"
    UNIV = "UNIV"
    ZARA1 = "ZARA1"
    ZARA2 = "ZARA2"
    SYNTH = "SYNTH"

    @classmethod
    def parse(cls, name: "str | Dataset") -> "Dataset":
        if isinstance(name, Dataset):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ConfigError(
                f"unknown dataset {name!r}; expected one of {[d.value for d in cls]}"
            ) from None


BENCHMARK_SETS = (Dataset.ETH, Dataset.HOTEL, Dataset.UNIV, Dataset.ZARA1, Dataset.ZARA2)


@dataclass(frozen=True, order=True)
class RawDetection:
    frame_id: int
    ped_id: int
    x: float
    y: float


@dataclass(frozen=True)
class ColumnOrder:
    """Column positions of each field in an annotation line."""

    frame: int = 0
    ped: int = 1
    x: int = 2
    y: int = 3

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "ColumnOrder":
        """Build from a name sequence such as ``("frame", "ped", "y", "x")``."""
        names = [n.strip().lower() for n in names]
        if sorted(names) != ["frame", "ped", "x", "y"]:
            raise ConfigError(f"column order must name frame, ped, x, y once each: {names}")
        return cls(**{n: i for i, n in enumerate(names)})


@dataclass
class TrajectoryWindow:
    window_id: int
    ped_ids: tuple[int, ...]
    abs: np.ndarray  # (N, obs_len + pred_len, 2)
    source_dataset: Dataset = Dataset.SYNTH
    obs_len: int = OBS_LEN
    pred_len: int = PRED_LEN
    origin_frame: int = 0
    rel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.abs = np.asarray(self.abs, dtype=np.float64)
        self.ped_ids = tuple(int(p) for p in self.ped_ids)
        self.source_dataset = Dataset.parse(self.source_dataset)
        if self.abs.ndim != 3 or self.abs.shape[2] != 2:
            raise ConfigError(f"window coordinates must be N x T x 2, got {self.abs.shape}")
        if self.abs.shape[0] != len(self.ped_ids) or self.abs.shape[0] < 1:
            raise ConfigError("window needs one coordinate track per pedestrian and N >= 1")
        if self.abs.shape[1] != self.obs_len + self.pred_len:
            raise ConfigError(
                f"window length {self.abs.shape[1]} != obs_len + pred_len "
                f"({self.obs_len} + {self.pred_len})"
            )
        if not np.all(np.isfinite(self.abs)):
            raise ConfigError("window coordinates must be finite")
        self.rel = to_relative(self.abs)

    @property
    def n_peds(self) -> int:
        return len(self.ped_ids)

    @property
    def seq_len(self) -> int:
        return self.obs_len + self.pred_len

    @property
    def obs_abs(self) -> np.ndarray:
        return self.abs[:, : self.obs_len]

    @property
    def obs_rel(self) -> np.ndarray:
        return self.rel[:, : self.obs_len]

    @property
    def pred_abs(self) -> np.ndarray:
        return self.abs[:, self.obs_len :]

    @property
    def pred_rel(self) -> np.ndarray:
        return self.rel[:, self.obs_len :]


@dataclass
class DatasetSplit:
    test_set: Dataset
    train_windows: list[TrajectoryWindow]
    test_windows: list[TrajectoryWindow]


def _parse_number(token: str) -> float:
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {token!r}")
    return value


def _parse_int(token: str) -> int:
    value = _parse_number(token)
    if value != int(value):
        raise ValueError(f"expected an integer, got {token!r}")
    return int(value)


def parse_dataset(path: str | Path, columns: ColumnOrder | None = None) -> list[RawDetection]:
    """Read an annotation file into detections sorted by (frame_id, ped_id).

    Frame and pedestrian ids may be written as floats (``780.0``) as long as
    they are integral. Raises :class:`ParseError` with the 1-based line number
    on malformed lines and :class:`DuplicateRecordError` on repeated
    (frame, ped) pairs.
    """
    columns = columns or ColumnOrder()
    path = Path(path)
    detections: list[RawDetection] = []
    seen: dict[tuple[int, int], int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 4:
                raise ParseError(f"expected 4 fields, got {len(tokens)}", lineno, str(path))
            try:
                frame = _parse_int(tokens[columns.frame])
                ped = _parse_int(tokens[columns.ped])
                x = _parse_number(tokens[columns.x])
                y = _parse_number(tokens[columns.y])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, str(path)) from None
            key = (frame, ped)
            if key in seen:
                raise DuplicateRecordError(
                    f"duplicate record for frame {frame}, ped {ped} (first at line {seen[key]})",
                    lineno,
                    str(path),
                )
            seen[key] = lineno
            detections.append(RawDetection(frame, ped, x, y))
    detections.sort(key=lambda d: (d.frame_id, d.ped_id))
    return detections


def infer_frame_step(detections: Iterable[RawDetection]) -> int:
    """Most common positive frame gap between successive detections of a pedestrian."""
    frames_by_ped: dict[int, list[int]] = defaultdict(list)
    for det in detections:
        frames_by_ped[det.ped_id].append(det.frame_id)
    gaps: Counter[int] = Counter()
    for frames in frames_by_ped.values():
        frames.sort()
        gaps.update(b - a for a, b in zip(frames, frames[1:]) if b > a)
    if not gaps:
        raise ConfigError("cannot infer frame step: no pedestrian has two detections")
    # ties resolved towards the smaller gap for determinism
    return min(gaps, key=lambda g: (-gaps[g], g))


def build_windows(
    detections: Sequence[RawDetection],
    obs_len: int = OBS_LEN,
    pred_len: int = PRED_LEN,
    frame_step: int = 10,
    stride: int = 1,
    dataset: Dataset | str = Dataset.SYNTH,
    first_window_id: int = 0,
) -> list[TrajectoryWindow]:
    """Cut detections into fixed-length windows of co-present pedestrians.

    Window origins are the distinct annotated frames, visited every
    ``stride`` frames. A pedestrian belongs to the window starting at
    frame ``f`` iff it is annotated at each of ``f, f + frame_step, ...``
    for ``obs_len + pred_len`` steps. Windows without pedestrians are dropped.
    """
    if obs_len < 1 or pred_len < 1 or frame_step < 1 or stride < 1:
        raise ConfigError("obs_len, pred_len, frame_step and stride must be positive")
    dataset = Dataset.parse(dataset)
    seq_len = obs_len + pred_len
    positions: dict[int, dict[int, tuple[float, float]]] = defaultdict(dict)
    for det in detections:
        positions[det.frame_id][det.ped_id] = (det.x, det.y)
    frames = sorted(positions)

    windows: list[TrajectoryWindow] = []
    next_id = first_window_id
    for origin in frames[::stride]:
        steps = [origin + k * frame_step for k in range(seq_len)]
        if any(f not in positions for f in steps):
            continue
        present = set(positions[origin])
        for f in steps[1:]:
            present &= positions[f].keys()
            if not present:
                break
        if not present:
            continue
        ped_ids = tuple(sorted(present))
        coords = np.array([[positions[f][p] for f in steps] for p in ped_ids], dtype=np.float64)
        windows.append(
            TrajectoryWindow(
                window_id=next_id,
                ped_ids=ped_ids,
                abs=coords,
                source_dataset=dataset,
                obs_len=obs_len,
                pred_len=pred_len,
                origin_frame=origin,
            )
        )
        next_id += 1
    return windows


def _as_coords(a) -> np.ndarray:
    a = np.asarray(a)
    # object arrays (e.g. of Fraction) pass through for exact arithmetic
    return a if a.dtype == object else a.astype(np.float64, copy=False)


def to_relative(abs_traj: np.ndarray) -> np.ndarray:
    """Per-step displacements; the first step of each track is (0, 0)."""
    abs_traj = _as_coords(abs_traj)
    rel = np.zeros_like(abs_traj)
    rel[..., :1, :] = abs_traj[..., :1, :] * 0
    rel[..., 1:, :] = abs_traj[..., 1:, :] - abs_traj[..., :-1, :]
    return rel


def to_absolute(rel_traj: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_relative` given each track's first position.

    Accumulates sequentially from the origin. With exact arithmetic (object
    arrays of ``fractions.Fraction``) the round trip
    ``to_absolute(to_relative(a), a[:, 0])`` is the identity; with floats it
    holds to rounding error.
    """
    rel_traj = _as_coords(rel_traj)
    out = np.empty_like(rel_traj)
    out[..., 0, :] = _as_coords(origin)
    for t in range(1, rel_traj.shape[-2]):
        out[..., t, :] = out[..., t - 1, :] + rel_traj[..., t, :]
    return out


def leave_one_out_split(
    all_windows: Mapping[Dataset | str, Sequence[TrajectoryWindow]],
    test_set: Dataset | str,
) -> DatasetSplit:
    """Hold out ``test_set``; train on every other dataset's windows."""
    test_set = Dataset.parse(test_set)
    by_set = {Dataset.parse(k): list(v) for k, v in all_windows.items()}
    if test_set not in by_set:
        raise ConfigError(f"no windows provided for test set {test_set.value}")
    train: list[TrajectoryWindow] = []
    for name in sorted(by_set, key=lambda d: list(Dataset).index(d)):
        if name != test_set:
            train.extend(by_set[name])
    if not train:
        warnings.warn(f"leave-one-out split for {test_set.value} has an empty training set")
    return DatasetSplit(test_set=test_set, train_windows=train, test_windows=by_set[test_set])


def write_windows(windows: Sequence[TrajectoryWindow], path: str | Path) -> None:
    """Serialize windows to the versioned text cache format.

    Layout::

        # trajgroup-windows v1
        window <window_id> <dataset> <origin_frame> <n_peds> <obs_len> <pred_len>
        ped <ped_id> <x_0> <y_0> ... <x_19> <y_19>
        ...

    Floats are written with ``repr`` so reading back is lossless.
    """
    lines = [f"# {WINDOW_FORMAT} v{WINDOW_FORMAT_VERSION}"]
    for w in windows:
        lines.append(
            f"window {w.window_id} {w.source_dataset.value} {w.origin_frame} "
            f"{w.n_peds} {w.obs_len} {w.pred_len}"
        )
        for pid, track in zip(w.ped_ids, w.abs):
            coords = " ".join(repr(float(v)) for v in track.reshape(-1))
            lines.append(f"ped {pid} {coords}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_windows(path: str | Path) -> list[TrajectoryWindow]:
    path = Path(path)
    text = path.read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != f"# {WINDOW_FORMAT} v{WINDOW_FORMAT_VERSION}":
        raise ParseError(f"not a {WINDOW_FORMAT} v{WINDOW_FORMAT_VERSION} file", 1, str(path))
    windows: list[TrajectoryWindow] = []
    header = None
    peds: list[tuple[int, list[float]]] = []

    def flush(lineno: int) -> None:
        if header is None:
            return
        wid, ds, origin, n, obs_len, pred_len = header
        if len(peds) != n:
            raise ParseError(f"window {wid} declares {n} pedestrians, found {len(peds)}", lineno, str(path))
        coords = np.array([c for _, c in peds], dtype=np.float64).reshape(n, obs_len + pred_len, 2)
        windows.append(
            TrajectoryWindow(
                window_id=wid,
                ped_ids=tuple(p for p, _ in peds),
                abs=coords,
                source_dataset=ds,
                obs_len=obs_len,
                pred_len=pred_len,
                origin_frame=origin,
            )
        )

    for lineno, line in enumerate(text[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        try:
            if tokens[0] == "window":
                flush(lineno)
                header = (int(tokens[1]), Dataset.parse(tokens[2]), int(tokens[3]),
                          int(tokens[4]), int(tokens[5]), int(tokens[6]))
                peds = []
            elif tokens[0] == "ped" and header is not None:
                peds.append((int(tokens[1]), [float(t) for t in tokens[2:]]))
                if len(peds[-1][1]) != 2 * (header[4] + header[5]):
                    raise ValueError("wrong number of coordinates")
            else:
                raise ValueError(f"unexpected record {tokens[0]!r}")
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno, str(path)) from None
    flush(len(text))
    return windows
