"""Model dimensions, parameter storage and checkpoint files."""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, ParseError

CHECKPOINT_FORMAT = "trajgroup-params"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    embed: int = 16  # displacement embedding fed to the encoder LSTM
    enc_hidden: int = 32
    social: int = 16
    gcn_hidden: int = 72
    gcn_out: int = 8
    z: int = 8
    dec_embed: int = 16
    dec_hidden: int = 32

    @property
    def node_features(self) -> int:
        return self.enc_hidden + self.social


def parameter_shapes(dims: ModelDims) -> "OrderedDict[str, tuple[int, ...]]":
    h, hd = dims.enc_hidden, dims.dec_hidden
    return OrderedDict(
        [
            ("enc_embed.W", (2, dims.embed)),
            ("enc_embed.b", (dims.embed,)),
            ("enc_lstm.Wx", (dims.embed, 4 * h)),
            ("enc_lstm.Wh", (h, 4 * h)),
            ("enc_lstm.b", (4 * h,)),
            ("social.W", (2, dims.social)),
            ("social.b", (dims.social,)),
            ("intra.W0", (dims.node_features, dims.gcn_hidden)),
            ("intra.W1", (dims.gcn_hidden, dims.gcn_out)),
            ("inter.W0", (dims.node_features, dims.gcn_hidden)),
            ("inter.W1", (dims.gcn_hidden, dims.gcn_out)),
            ("vae.W", (2 * dims.gcn_out, 2 * dims.z)),
            ("vae.b", (2 * dims.z,)),
            ("dec_embed.W", (2, dims.dec_embed)),
            ("dec_embed.b", (dims.dec_embed,)),
            ("dec_lstm.Wx", (dims.z + dims.dec_embed, 4 * hd)),
            ("dec_lstm.Wh", (hd, 4 * hd)),
            ("dec_lstm.b", (4 * hd,)),
            ("dec_out.W", (hd, 2)),
            ("dec_out.b", (2,)),
        ]
    )


class ParameterSet:
    """Named float64 arrays for every trainable weight of the model."""

    def __init__(self, dims: ModelDims, values: "dict[str, np.ndarray]"):
        self.dims = dims
        shapes = parameter_shapes(dims)
        if set(values) != set(shapes):
            missing = sorted(set(shapes) - set(values))
            extra = sorted(set(values) - set(shapes))
            raise ConfigError(f"parameter names do not match the model: missing {missing}, extra {extra}")
        self.values: OrderedDict[str, np.ndarray] = OrderedDict()
        for name, shape in shapes.items():
            arr = np.array(values[name], dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            self.values[name] = arr

    @classmethod
    def initialize(cls, dims: ModelDims | None = None, seed: int = 0) -> "ParameterSet":
        """Weights uniform in +-1/sqrt(fan_in), biases zero."""
        dims = dims or ModelDims()
        rng = np.random.default_rng([seed, 0xC0DE])
        values = {}
        for name, shape in parameter_shapes(dims).items():
            if len(shape) == 1:
                values[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                values[name] = rng.uniform(-bound, bound, size=shape)
        return cls(dims, values)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values[name].shape:
            raise ConfigError(f"parameter {name} must keep shape {self.values[name].shape}")
        self.values[name] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def items(self):
        return self.values.items()

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.dims, {k: v.copy() for k, v in self.values.items()})

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet(self.dims, {k: np.zeros_like(v) for k, v in self.values.items()})

    @property
    def n_scalars(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.values.values())


def save_checkpoint(params: ParameterSet, path: str | Path, extra: dict | None = None) -> None:
    """Write a checkpoint: one JSON header line, then raw little-endian float64 data.

    The header holds the format tag and version, the model dimensions, a
    manifest of (name, shape, offset) for every tensor and any ``extra``
    metadata. Output bytes depend only on the parameter values.
    """
    manifest = []
    offset = 0
    for name, arr in params.items():
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": asdict(params.dims),
        "tensors": manifest,
        "count": offset,
        "extra": extra or {},
    }
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.values.values())
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)


def load_checkpoint(path: str | Path) -> ParameterSet:
    """Read a checkpoint, validating every tensor shape against the model."""
    with open(path, "rb") as fh:
        head = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ParseError("checkpoint header is not valid JSON", 1, str(path)) from None
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint", 1, str(path))
    dims = ModelDims(**header["dims"])
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != header["count"]:
        raise ConfigError(f"checkpoint holds {data.size} values, header declares {header['count']}")
    expected = parameter_shapes(dims)
    values = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if expected.get(name) != shape:
            raise ConfigError(f"checkpoint tensor {name} has shape {shape}, model expects {expected.get(name)}")
        size = int(np.prod(shape))
        values[name] = data[entry["offset"] : entry["offset"] + size].reshape(shape).astype(np.float64)
    return ParameterSet(dims, values)
