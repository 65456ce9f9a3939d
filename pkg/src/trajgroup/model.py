"""Group-aware trajectory model: LSTM encoder, twin GCNs, Gaussian latent, LSTM decoder.

For one ego pedestrian the forward pass is

1. embed each pedestrian's observed displacements, run the shared encoder
   LSTM and keep its final hidden state ``e_j``;
2. embed every neighbor's position relative to the ego with a ReLU layer
   and max-pool into the social vector ``p``;
3. feed node features ``[e_j, p]`` through two 2-layer GCNs whose
   adjacencies are masked to the ego's group (intra) and to everyone else
   (inter), and read the ego's row of each;
4. map both ego features to the mean and log-variance of a diagonal
   Gaussian and draw ``z`` by reparameterization;
5. decode 12 displacements with an LSTM that consumes ``z`` and an
   embedding of its own previous output.

Batches of (window, ego) samples are padded to the largest crowd in the
batch. Padded nodes have zero adjacency columns, so they never influence
real nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coherence import NOISE, GroupLabeling
from .errors import ContractViolation
from .graph import MaskedAdjacency, build_masked_adjacency
from .params import ParameterSet
from .trajdata import TrajectoryWindow


@dataclass(frozen=True)
class GaussianLatent:
    mu: np.ndarray
    logvar: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.logvar)


# ---------------------------------------------------------------------------
# Building blocks (Tensor in, Tensor out)
# ---------------------------------------------------------------------------


def linear(x, w, b=None) -> Tensor:
    out = ad.matmul(x, w)
    return out if b is None else out + b


def lstm_step(x, h, c, wx, wh, b) -> tuple[Tensor, Tensor]:
    """Single LSTM cell update with gate order (input, forget, cell, output)."""
    n = h.shape[-1]
    hc = ad.lstm_cell(x, h, c, wx, wh, b)
    return hc[..., :n], hc[..., n:]


def gcn_layer(h, a, w, activate: bool = True) -> Tensor:
    """One graph convolution ``A @ H @ W``, ReLU-activated unless ``activate`` is False."""
    h, a, w = ad.as_tensor(h), ad.as_tensor(a), ad.as_tensor(w)
    if a.shape[-1] != h.shape[-2] or h.shape[-1] != w.shape[0]:
        raise ContractViolation(f"gcn shapes do not conform: A {a.shape}, H {h.shape}, W {w.shape}")
    out = ad.matmul(ad.matmul(a, h), w)
    return ad.relu(out) if activate else out


def encoder(obs_rel, p: Mapping[str, Tensor]) -> Tensor:
    """Final encoder hidden state for each track of ``obs_rel`` (..., T, 2)."""
    obs_rel = ad.as_tensor(obs_rel)
    emb = linear(obs_rel, p["enc_embed.W"], p["enc_embed.b"])
    batch = obs_rel.shape[:-2]
    hidden = p["enc_lstm.Wh"].shape[0]
    h = Tensor(np.zeros(batch + (hidden,)))
    c = Tensor(np.zeros(batch + (hidden,)))
    for t in range(obs_rel.shape[-2]):
        h, c = lstm_step(emb[..., t, :], h, c, p["enc_lstm.Wx"], p["enc_lstm.Wh"], p["enc_lstm.b"])
    return h


def social_pool(rel_pos, mask: np.ndarray, p: Mapping[str, Tensor]) -> Tensor:
    """Max over neighbors of ReLU-embedded relative positions; zero when no neighbor.

    ``rel_pos`` is (..., M, 2) and ``mask`` (..., M) marks real neighbors.
    """
    emb = ad.relu(linear(rel_pos, p["social.W"], p["social.b"]))
    return ad.masked_max(emb, np.asarray(mask)[..., None], axis=-2)


def twin_gcn(h0, a_intra, a_inter, ego_index, p: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Ego rows of the intra and inter GCN outputs for batched (K, N, F) node features."""
    k = np.arange(h0.shape[0])
    out = []
    for prefix, a in (("intra", a_intra), ("inter", a_inter)):
        h1 = gcn_layer(h0, a, p[f"{prefix}.W0"], activate=True)
        h2 = gcn_layer(h1, a, p[f"{prefix}.W1"], activate=False)
        out.append(h2[k, ego_index])
    return out[0], out[1]


def latent_head(v_intra, v_inter, p: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    stats = linear(ad.concat([v_intra, v_inter], axis=-1), p["vae.W"], p["vae.b"])
    zdim = stats.shape[-1] // 2
    return stats[..., :zdim], stats[..., zdim:]


def reparameterize(mu, logvar, eps: np.ndarray | None) -> Tensor:
    """``mu + exp(logvar / 2) * eps``; ``eps=None`` returns the mean."""
    if eps is None:
        return ad.as_tensor(mu)
    return mu + ad.exp(logvar * 0.5) * eps


def decoder(z, last_rel, pred_len: int, p: Mapping[str, Tensor]) -> Tensor:
    """Self-fed decoder: (..., z) and (..., 2) -> (..., pred_len, 2) displacements."""
    z = ad.as_tensor(z)
    prev = ad.as_tensor(last_rel)
    batch = z.shape[:-1]
    hidden = p["dec_lstm.Wh"].shape[0]
    h = Tensor(np.zeros(batch + (hidden,)))
    c = Tensor(np.zeros(batch + (hidden,)))
    steps = []
    for _ in range(pred_len):
        emb = linear(prev, p["dec_embed.W"], p["dec_embed.b"])
        x = ad.concat([z, emb], axis=-1)
        h, c = lstm_step(x, h, c, p["dec_lstm.Wx"], p["dec_lstm.Wh"], p["dec_lstm.b"])
        prev = linear(h, p["dec_out.W"], p["dec_out.b"])
        steps.append(prev)
    return ad.stack(steps, axis=-2)


def kl_to_standard_normal(mu, logvar) -> Tensor:
    """Per-sample KL(N(mu, diag exp(logvar)) || N(0, I))."""
    terms = ad.square(mu) + ad.exp(logvar) - logvar - 1.0
    return ad.sum(terms, axis=-1) * 0.5


def param_tensors(params: ParameterSet, requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in params.items()}


# ---------------------------------------------------------------------------
# Samples and batches
# ---------------------------------------------------------------------------


@dataclass
class EgoSample:
    """One (window, ego) training or evaluation item."""

    window: TrajectoryWindow
    ego: int  # row index into window.ped_ids
    adjacency: MaskedAdjacency

    @property
    def n(self) -> int:
        return self.window.n_peds


def window_labels(window: TrajectoryWindow, labeling: GroupLabeling | None) -> dict[int, int]:
    if labeling is None:
        return {pid: NOISE for pid in window.ped_ids}
    missing = [pid for pid in window.ped_ids if pid not in labeling.label]
    if missing:
        raise ContractViolation(f"window {window.window_id} has unlabeled pedestrians {missing}")
    return {pid: labeling.label[pid] for pid in window.ped_ids}


def make_samples(
    windows: Sequence[TrajectoryWindow],
    labelings: Mapping | None = None,
    inter_self_loop: bool = True,
) -> list[EgoSample]:
    """Every (window, ego) pair with its masked adjacency.

    ``labelings`` maps (dataset, window_id) to a :class:`GroupLabeling`;
    windows without an entry are treated as all-NOISE.
    """
    out = []
    for w in windows:
        lab = None if labelings is None else labelings.get((w.source_dataset, w.window_id))
        labels = window_labels(w, lab)
        for e, pid in enumerate(w.ped_ids):
            adj = build_masked_adjacency(w.n_peds, labels, pid, w.ped_ids, inter_self_loop)
            out.append(EgoSample(w, e, adj))
    return out


@dataclass
class Batch:
    """Padded arrays for a list of :class:`EgoSample`."""

    enc_input: np.ndarray  # (P, obs_len, 2) observed displacements of every distinct track
    node_index: np.ndarray  # (K, Nmax) rows into enc_input; P for padding
    neighbor_mask: np.ndarray  # (K, Nmax) real neighbor other than the ego
    rel_pos: np.ndarray  # (K, Nmax, 2) neighbor minus ego position at the last observed frame
    a_intra: np.ndarray  # (K, Nmax, Nmax)
    a_inter: np.ndarray
    ego_index: np.ndarray  # (K,)
    last_rel: np.ndarray  # (K, 2)
    last_abs: np.ndarray  # (K, 2)
    gt_rel: np.ndarray  # (K, pred_len, 2)
    gt_abs: np.ndarray
    pred_len: int

    @property
    def size(self) -> int:
        return self.ego_index.shape[0]


def make_batch(samples: Sequence[EgoSample]) -> Batch:
    if not samples:
        raise ContractViolation("cannot build an empty batch")
    windows: dict[int, int] = {}
    tracks = []
    offsets = []
    for s in samples:
        key = id(s.window)
        if key not in windows:
            windows[key] = sum(t.shape[0] for t in tracks)
            tracks.append(s.window.obs_rel)
        offsets.append(windows[key])
    enc_input = np.concatenate(tracks, axis=0)
    n_tracks = enc_input.shape[0]
    k = len(samples)
    nmax = max(s.n for s in samples)
    pred_len = samples[0].window.pred_len
    node_index = np.full((k, nmax), n_tracks, dtype=np.int64)
    neighbor_mask = np.zeros((k, nmax), dtype=bool)
    rel_pos = np.zeros((k, nmax, 2))
    eye = np.eye(nmax)
    a_intra = np.tile(eye, (k, 1, 1))
    a_inter = np.tile(eye, (k, 1, 1))
    ego_index = np.array([s.ego for s in samples], dtype=np.int64)
    last_rel = np.zeros((k, 2))
    last_abs = np.zeros((k, 2))
    gt_rel = np.zeros((k, pred_len, 2))
    gt_abs = np.zeros((k, pred_len, 2))
    for r, (s, off) in enumerate(zip(samples, offsets)):
        w, n, e = s.window, s.n, s.ego
        node_index[r, :n] = off + np.arange(n)
        neighbor_mask[r, :n] = True
        neighbor_mask[r, e] = False
        last = w.abs[:, w.obs_len - 1]
        rel_pos[r, :n] = last - last[e]
        a_intra[r, :n, :n] = s.adjacency.intra
        a_inter[r, :n, :n] = s.adjacency.inter
        last_rel[r] = w.rel[e, w.obs_len - 1]
        last_abs[r] = last[e]
        gt_rel[r] = w.pred_rel[e]
        gt_abs[r] = w.pred_abs[e]
    return Batch(enc_input, node_index, neighbor_mask, rel_pos, a_intra, a_inter, ego_index,
                 last_rel, last_abs, gt_rel, gt_abs, pred_len)


# ---------------------------------------------------------------------------
# Batched forward pass
# ---------------------------------------------------------------------------


@dataclass
class Encoded:
    e: Tensor
    social: Tensor
    v_intra: Tensor
    v_inter: Tensor
    mu: Tensor
    logvar: Tensor


def encode_batch(batch: Batch, p: Mapping[str, Tensor]) -> Encoded:
    e = encoder(batch.enc_input, p)
    e_pad = ad.concat([e, Tensor(np.zeros((1, e.shape[1])))], axis=0)
    nodes = e_pad[batch.node_index]
    social = social_pool(batch.rel_pos, batch.neighbor_mask, p)
    k, nmax = batch.node_index.shape
    social_nodes = ad.broadcast_to(ad.reshape(social, (k, 1, social.shape[-1])), (k, nmax, social.shape[-1]))
    h0 = ad.concat([nodes, social_nodes], axis=-1)
    v_intra, v_inter = twin_gcn(h0, batch.a_intra, batch.a_inter, batch.ego_index, p)
    mu, logvar = latent_head(v_intra, v_inter, p)
    return Encoded(e, social, v_intra, v_inter, mu, logvar)


@dataclass
class ForwardTrace:
    """Everything recorded by :func:`forward`; consumed by :func:`backward`."""

    loss: Tensor
    params: dict[str, Tensor]
    pred_rel: np.ndarray  # (K, pred_len, 2), or (k, K, pred_len, 2) in variety mode
    mu: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray | None
    recon: float
    kl: float
    consumed: bool = field(default=False, repr=False)


def forward(
    params: ParameterSet,
    batch: Batch,
    eps: np.ndarray | None = None,
    beta: float = 1.0,
    requires_grad: bool = True,
) -> ForwardTrace:
    """Loss over a batch: mean displacement MSE plus ``beta`` times mean KL.

    ``eps`` is (K, z) standard-normal noise for the reparameterized draw,
    or (k, K, z) for best-of-k training where each sample keeps only its
    lowest-error draw. ``eps=None`` decodes from the mean.
    """
    p = param_tensors(params, requires_grad)
    enc = encode_batch(batch, p)
    gt = batch.gt_rel
    if eps is not None and np.ndim(eps) == 3:
        n_draw, k, zdim = eps.shape
        mu_rep = ad.broadcast_to(enc.mu, (n_draw, k, zdim))
        lv_rep = ad.broadcast_to(enc.logvar, (n_draw, k, zdim))
        z = reparameterize(mu_rep, lv_rep, eps)
        last = np.broadcast_to(batch.last_rel, (n_draw,) + batch.last_rel.shape)
        pred = decoder(z, last, batch.pred_len, p)
        err = ad.mean(ad.sum(ad.square(pred - gt), axis=-1), axis=-1)  # (n_draw, K)
        recon = ad.min_over(err, axis=0)
    else:
        z = reparameterize(enc.mu, enc.logvar, eps)
        pred = decoder(z, batch.last_rel, batch.pred_len, p)
        recon = ad.mean(ad.sum(ad.square(pred - gt), axis=-1), axis=-1)  # (K,)
    recon_mean = ad.mean(recon)
    kl_mean = ad.mean(kl_to_standard_normal(enc.mu, enc.logvar))
    loss = recon_mean + kl_mean * beta
    return ForwardTrace(
        loss=loss,
        params=p,
        pred_rel=pred.data,
        mu=enc.mu.data,
        logvar=enc.logvar.data,
        eps=None if eps is None else np.asarray(eps),
        recon=float(recon_mean.data),
        kl=float(kl_mean.data),
    )


def backward(trace: ForwardTrace | None) -> dict[str, np.ndarray]:
    """Gradient of the recorded loss with respect to every parameter.

    The noise used in the forward pass is held fixed. A trace can be
    differentiated once.
    """
    if trace is None or not isinstance(trace, ForwardTrace):
        raise ContractViolation("backward needs the trace of a completed forward pass")
    if trace.consumed:
        raise ContractViolation("this forward trace was already differentiated")
    if not all(t.requires_grad for t in trace.params.values()):
        raise ContractViolation("forward pass was run without gradient tracking")
    trace.consumed = True
    trace.loss.backward()
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in trace.params.items()
    }


def loss_value(params: ParameterSet, batch: Batch, eps: np.ndarray | None = None, beta: float = 1.0) -> float:
    """Forward-only loss, for finite-difference checks."""
    return float(forward(params, batch, eps, beta, requires_grad=False).loss.data)


def predict(
    params: ParameterSet,
    batch: Batch,
    eps: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted relative and absolute future tracks.

    ``eps`` of shape (S, K, z) gives S stochastic draws per sample and
    outputs (S, K, pred_len, 2); ``eps=None`` decodes the latent mean and
    outputs (K, pred_len, 2).
    """
    p = param_tensors(params)
    enc = encode_batch(batch, p)
    if eps is None:
        pred = decoder(enc.mu, batch.last_rel, batch.pred_len, p).data
    else:
        eps = np.asarray(eps)
        n_draw, k, zdim = eps.shape
        z = enc.mu.data + np.exp(0.5 * enc.logvar.data) * eps
        last = np.broadcast_to(batch.last_rel, (n_draw,) + batch.last_rel.shape)
        pred = decoder(z, last, batch.pred_len, p).data
    return pred, batch.last_abs[..., None, :] + np.cumsum(pred, axis=-2)


# ---------------------------------------------------------------------------
# Single-scene functional interface
# ---------------------------------------------------------------------------


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ContractViolation("model inputs must be finite")


def encode_scene(obs_rel: np.ndarray, last_pos: np.ndarray, params: ParameterSet) -> tuple[np.ndarray, np.ndarray]:
    """Encoder states (N, enc_hidden) and each pedestrian's social vector (N, social).

    ``obs_rel`` is N x T_obs x 2 displacements, ``last_pos`` the N x 2
    positions at the last observed frame.
    """
    obs_rel = np.asarray(obs_rel, dtype=np.float64)
    last_pos = np.asarray(last_pos, dtype=np.float64)
    _check_finite(obs_rel, last_pos)
    n = obs_rel.shape[0]
    if n < 1:
        raise ContractViolation("a scene needs at least one pedestrian")
    p = param_tensors(params)
    e = encoder(obs_rel, p).data
    rel = last_pos[None, :, :] - last_pos[:, None, :]  # row i: neighbors relative to i
    mask = ~np.eye(n, dtype=bool)
    social = social_pool(rel, mask, p).data
    return e, social


def aggregate_interactions(
    e: np.ndarray, social_i: np.ndarray, adjacency: MaskedAdjacency, params: ParameterSet
) -> tuple[np.ndarray, np.ndarray]:
    """Ego features from both GCNs; node j's input is ``[e_j, social_i]``."""
    e = np.asarray(e, dtype=np.float64)
    n = e.shape[0]
    h0 = np.concatenate([e, np.broadcast_to(social_i, (n, len(social_i)))], axis=1)[None]
    p = param_tensors(params)
    vi, vo = twin_gcn(h0, adjacency.intra[None], adjacency.inter[None], np.array([adjacency.ego]), p)
    return vi.data[0], vo.data[0]


def latent(
    v_intra: np.ndarray,
    v_inter: np.ndarray,
    params: ParameterSet,
    rng: np.random.Generator | None = None,
    mean_mode: bool = False,
    eps: np.ndarray | None = None,
) -> tuple[np.ndarray, GaussianLatent]:
    """Draw ``z`` from the Gaussian predicted for one ego.

    Noise comes from ``eps`` if given, else from ``rng``; ``mean_mode``
    returns the mean exactly.
    """
    _check_finite(v_intra, v_inter)
    p = param_tensors(params)
    mu, logvar = latent_head(np.asarray(v_intra)[None], np.asarray(v_inter)[None], p)
    dist = GaussianLatent(mu.data[0], logvar.data[0])
    if mean_mode:
        return dist.mu.copy(), dist
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng()
        eps = rng.standard_normal(dist.mu.shape)
    return dist.mu + np.exp(0.5 * dist.logvar) * eps, dist


def decode(
    z: np.ndarray,
    last_obs_rel: np.ndarray,
    last_obs_abs: np.ndarray,
    params: ParameterSet,
    pred_len: int = 12,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted displacements (pred_len, 2) and the absolute track they trace from ``last_obs_abs``."""
    _check_finite(z, last_obs_rel, last_obs_abs)
    p = param_tensors(params)
    rel = decoder(np.asarray(z, dtype=np.float64)[None], np.asarray(last_obs_rel, dtype=np.float64)[None], pred_len, p).data[0]
    return rel, np.asarray(last_obs_abs) + np.cumsum(rel, axis=0)


def loss(pred_rel: np.ndarray, gt_rel: np.ndarray, dist: GaussianLatent, beta: float = 1.0) -> float:
    """Mean squared displacement error plus ``beta`` times the KL to N(0, I)."""
    pred_rel, gt_rel = np.asarray(pred_rel), np.asarray(gt_rel)
    if pred_rel.shape != gt_rel.shape:
        raise ContractViolation(f"prediction shape {pred_rel.shape} != ground truth {gt_rel.shape}")
    recon = float(np.mean(np.sum((pred_rel - gt_rel) ** 2, axis=-1)))
    kl = float(kl_to_standard_normal(dist.mu, dist.logvar).data)
    return recon + beta * kl
