"""Ego-specific intra-group and inter-group adjacency matrices.

Both matrices start from a complete graph with self-loops. A column mask
keeps only the ego's group members (intra) or only pedestrians outside the
ego's group (inter); the ego's own column survives in both. Rows are then
normalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .coherence import NOISE
from .errors import ContractViolation


@dataclass(frozen=True)
class MaskedAdjacency:
    ego: int  # row/column index of the ego pedestrian
    intra: np.ndarray
    inter: np.ndarray


def base_adjacency(n: int) -> np.ndarray:
    if n < 1:
        raise ContractViolation(f"adjacency needs at least one node, got {n}")
    return np.ones((n, n), dtype=np.float64)


def _group_keys(labels: Mapping[int, int], ped_order: Sequence[int]) -> list[tuple]:
    keys = []
    for pid in ped_order:
        if pid not in labels:
            raise ContractViolation(f"pedestrian {pid} has no group label")
        g = labels[pid]
        # NOISE pedestrians are singleton groups
        keys.append(("solo", pid) if g == NOISE else ("group", g))
    return keys


def coherence_masks(
    labels: Mapping[int, int],
    ego: int,
    ped_order: Sequence[int],
    inter_self_loop: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Binary column masks selecting the ego's group and its complement.

    ``ego`` is a ped_id; ``ped_order`` fixes row/column indexing. Every row
    of a mask is identical.
    """
    ped_order = list(ped_order)
    if ego not in labels or ego not in ped_order:
        raise ContractViolation(f"ego {ego} is not in the labeling")
    keys = _group_keys(labels, ped_order)
    e = ped_order.index(ego)
    same = np.array([k == keys[e] for k in keys], dtype=np.float64)
    other = 1.0 - same
    if inter_self_loop:
        other[e] = 1.0
    n = len(ped_order)
    return np.tile(same, (n, 1)), np.tile(other, (n, 1))


def row_normalize(m: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; an all-zero row becomes a self-loop."""
    m = np.array(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {m.shape}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ContractViolation("adjacency entries must be finite and nonnegative")
    sums = m.sum(axis=1)
    zero = sums == 0
    m[zero, :] = 0.0
    idx = np.flatnonzero(zero)
    m[idx, idx] = 1.0
    sums[zero] = 1.0
    return m / sums[:, None]


def build_masked_adjacency(
    n: int,
    labels: Mapping[int, int],
    ego: int,
    ped_order: Sequence[int] | None = None,
    inter_self_loop: bool = True,
) -> MaskedAdjacency:
    """Row-normalized (base * mask) for both masks; ``ego`` is a ped_id.

    ``ped_order`` defaults to ``sorted(labels)`` and must have ``n`` entries.
    """
    ped_order = list(sorted(labels) if ped_order is None else ped_order)
    if len(ped_order) != n:
        raise ContractViolation(f"ped order has {len(ped_order)} entries for {n} nodes")
    base = base_adjacency(n)
    intra_mask, inter_mask = coherence_masks(labels, ego, ped_order, inter_self_loop)
    return MaskedAdjacency(
        ego=ped_order.index(ego),
        intra=row_normalize(base * intra_mask),
        inter=row_normalize(base * inter_mask),
    )


def format_adjacency(adj: MaskedAdjacency, ped_order: Sequence[int] | None = None) -> str:
    """Plain-text dump of both matrices, for inspection."""
    n = adj.intra.shape[0]
    ped_order = list(range(n)) if ped_order is None else list(ped_order)
    head = "      " + " ".join(f"{p:>7}" for p in ped_order)
    out = [f"ego row {adj.ego} (ped {ped_order[adj.ego]})"]
    for name, mat in (("intra", adj.intra), ("inter", adj.inter)):
        out.append(f"[{name}]")
        out.append(head)
        for p, row in zip(ped_order, mat):
            out.append(f"{p:>5} " + " ".join(f"{v:7.4f}" for v in row))
    return "\n".join(out)
