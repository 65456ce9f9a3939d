"""Adam optimizer and the mini-batch training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .model import EgoSample, backward, forward, make_batch, make_samples
from .params import ModelDims, ParameterSet
from .trajdata import DatasetSplit, TrajectoryWindow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    beta: float = 1.0  # KL weight
    variety_k: int = 1  # > 1: train on the best of k sampled decodings
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    inter_self_loop: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0 or self.variety_k < 1:
            raise ConfigError(f"invalid training configuration: {self}")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adam with bias-corrected moment estimates, updating arrays in place."""

    def __init__(self, params: ParameterSet, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, value in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainResult:
    params: ParameterSet
    loss_curve: list[float]
    config: TrainConfig
    n_samples: int
    seconds: float = 0.0
    history: list[dict] = field(default_factory=list)


def train(
    data: DatasetSplit | Sequence[TrajectoryWindow],
    labelings: Mapping | None,
    config: TrainConfig | None = None,
    params: ParameterSet | None = None,
    dims: ModelDims | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Fit the model on every (window, ego) pair of the training windows.

    ``labelings`` maps (dataset, window_id) to group labels. Each epoch
    shuffles the pairs, draws fresh reparameterization noise and applies
    one Adam step per mini-batch. The per-epoch loss is the sample-weighted
    mean of the batch losses. Everything random derives from
    ``config.seed``.
    """
    config = config or TrainConfig()
    windows = data.train_windows if isinstance(data, DatasetSplit) else list(data)
    if not windows:
        raise ConfigError("training set is empty")
    samples = make_samples(windows, labelings, config.inter_self_loop)
    params = params.copy() if params is not None else ParameterSet.initialize(dims, seed=config.seed)
    zdim = params.dims.z
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps)
    rng = np.random.default_rng([config.seed, 1])
    curve: list[float] = []
    history: list[dict] = []
    started = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        total = recon = kl = 0.0
        for start in range(0, len(samples), config.batch_size):
            chunk = [samples[i] for i in order[start : start + config.batch_size]]
            batch = make_batch(chunk)
            if config.variety_k > 1:
                eps = rng.standard_normal((config.variety_k, batch.size, zdim))
            else:
                eps = rng.standard_normal((batch.size, zdim))
            trace = forward(params, batch, eps, config.beta)
            grads = backward(trace)
            opt.step(grads)
            total += float(trace.loss.data) * batch.size
            recon += trace.recon * batch.size
            kl += trace.kl * batch.size
        epoch_loss = total / len(samples)
        curve.append(epoch_loss)
        history.append({"epoch": epoch + 1, "loss": epoch_loss,
                        "recon": recon / len(samples), "kl": kl / len(samples)})
        logger.debug("epoch %d loss %.6f", epoch + 1, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch + 1, epoch_loss)
    return TrainResult(params, curve, config, len(samples), time.perf_counter() - started, history)


def iterate_batches(samples: Sequence[EgoSample], batch_size: int):
    """Consecutive fixed-order batches, for evaluation."""
    for start in range(0, len(samples), batch_size):
        yield make_batch(samples[start : start + batch_size])
