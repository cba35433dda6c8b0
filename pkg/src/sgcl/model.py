"""Encoder, projection head, rule branch, and parameter gating.

All forward passes run on a Tape so one backward call yields every gradient.
ModelParams owns the master float64 arrays; each epoch the trainer re-leafs
them onto a fresh tape.

Initialization draws in a fixed order (encoder, projection, rule MLP, gate
MLP) from a single stream. Because the rule parameters are drawn last, a
rule-free model consumes an identical prefix of the stream, which is what
makes the rule-ablated run bit-exactly reproduce the plain contrastive path.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .errors import ConfigError, ContractError, FormatError, ShapeError
from .linalg import SparseCSR

CHECKPOINT_MAGIC = b"SGC1"


@dataclass
class ModelParams:
    """Master copies of every learnable array.

    encoder: GCN weight per layer (no bias; propagation is A_hat @ H @ W).
    projection / rule_mlp / param_mlp: [w1, b1, w2, b2] each.
    rule_mlp/param_mlp are None for a rule-free (ablated) model.
    """

    encoder: list[np.ndarray]
    projection: list[np.ndarray]
    rule_mlp: list[np.ndarray] | None = None
    param_mlp: list[np.ndarray] | None = None
    activation: str = "relu"

    def items(self) -> list[tuple[str, np.ndarray]]:
        """Canonical (name, array) order shared by Adam state and checkpoints."""
        out = [(f"enc_{i}", w) for i, w in enumerate(self.encoder)]
        names = ("w1", "b1", "w2", "b2")
        out += [(f"proj_{n}", a) for n, a in zip(names, self.projection)]
        if self.rule_mlp is not None:
            out += [(f"rule_{n}", a) for n, a in zip(names, self.rule_mlp)]
        if self.param_mlp is not None:
            out += [(f"gate_{n}", a) for n, a in zip(names, self.param_mlp)]
        return out

    @property
    def has_rule_branch(self) -> bool:
        return self.rule_mlp is not None and self.param_mlp is not None

    @property
    def embed_dim(self) -> int:
        return self.encoder[-1].shape[1]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _mlp_params(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int):
    return [
        _glorot(rng, d_in, d_hidden),
        np.zeros((1, d_hidden)),
        _glorot(rng, d_hidden, d_out),
        np.zeros((1, d_out)),
    ]


def init_params(cfg, in_dim: int, rule_in_dim: int, rng: np.random.Generator,
                include_rules: bool = True) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic per generator state.

    cfg supplies hidden_dim, mlp_hidden_dim, num_layers, activation.
    """
    hidden = int(cfg.hidden_dim)
    mlp_hidden = int(cfg.mlp_hidden_dim)
    layers = int(cfg.num_layers)
    if in_dim <= 0 or hidden <= 0 or mlp_hidden <= 0:
        raise ConfigError(
            f"dimensions must be positive (in={in_dim}, hidden={hidden}, "
            f"mlp_hidden={mlp_hidden})")
    if layers < 1:
        raise ConfigError(f"num_layers must be >= 1, got {layers}")
    if getattr(cfg, "activation", "relu") != "relu":
        raise ConfigError(f"unsupported activation {cfg.activation!r}")

    encoder = []
    d = in_dim
    for _ in range(layers):
        encoder.append(_glorot(rng, d, hidden))
        d = hidden
    projection = _mlp_params(rng, hidden, mlp_hidden, hidden)
    rule_mlp = param_mlp = None
    if include_rules:
        if rule_in_dim <= 0:
            raise ConfigError(f"rule input dimension must be positive, got {rule_in_dim}")
        rule_mlp = _mlp_params(rng, rule_in_dim, mlp_hidden, hidden)
        param_mlp = _mlp_params(rng, 2, mlp_hidden, 1)
    return ModelParams(encoder=encoder, projection=projection,
                       rule_mlp=rule_mlp, param_mlp=param_mlp)


# ---------------------------------------------------------------------------
# forward passes (tape-level)


def leaf_params(tape: Tape, params: ModelParams) -> dict[str, Var]:
    return {name: tape.leaf(arr, name=name) for name, arr in params.items()}


def gcn_forward(a_hat: SparseCSR, x: SparseCSR | Var, weights: list[Var]) -> Var:
    """Stack of propagation layers: H <- relu(A_hat @ H @ W), activation
    omitted after the final layer. x may be a sparse constant (typical for
    high-dimensional bag-of-words features) or a dense Var."""
    if not weights:
        raise ShapeError("gcn_forward needs at least one weight matrix")
    h: SparseCSR | Var = x
    for li, w in enumerate(weights):
        xw = ad.spmm(h, w) if isinstance(h, SparseCSR) else ad.matmul(h, w)
        h = ad.spmm(a_hat, xw)
        if li + 1 < len(weights):
            h = ad.relu(h)
    return h


def _mlp_forward(x: Var, p: list[Var], out_fn=None) -> Var:
    hidden = ad.relu(ad.add_rowvec(ad.matmul(x, p[0]), p[1]))
    out = ad.add_rowvec(ad.matmul(hidden, p[2]), p[3])
    return out_fn(out) if out_fn else out


def projection_forward(h: Var, p: list[Var]) -> Var:
    """Two-layer head used only inside the contrastive loss."""
    return _mlp_forward(h, p)


def rule_mlp_forward(w_feat: Var, p: list[Var]) -> Var:
    """Reduced features -> rule representation, before gating."""
    return _mlp_forward(w_feat, p)


def param_mlp_forward(ws: Var, p: list[Var]) -> Var:
    """Per-node [w_i, s_i] -> gate q_i in (0,1); ws has shape (N, 2)."""
    if ws.value.ndim != 2 or ws.value.shape[1] != 2:
        raise ShapeError(f"gate input must be (N, 2), got {ws.value.shape}")
    return _mlp_forward(ws, p, out_fn=ad.sigmoid)


def scale_rule_repr(q: Var, h_r_prime: Var) -> Var:
    """Row i of the rule representation scaled by its gate q_i."""
    return ad.scale_rows(h_r_prime, q)


# ---------------------------------------------------------------------------
# checkpointing
#
# Layout: magic "SGC1" | u32 json header length | json header
#         | f64 arrays back to back | u32 CRC32 of all preceding bytes.
# The header records activation plus each array's name and shape in order.


def save_params(params: ModelParams, path: str,
                extra: dict | None = None) -> None:
    """extra, if given, is merged into the JSON header (fingerprints and the
    like); the loader ignores keys it does not know."""
    entries = params.items()
    header = {
        "activation": params.activation,
        "num_encoder_layers": len(params.encoder),
        "has_rule_branch": params.has_rule_branch,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in entries],
    }
    if extra:
        for key in extra:
            if key in header:
                raise ContractError(f"extra header key {key!r} is reserved")
        header.update(extra)
    hjson = json.dumps(header, sort_keys=True).encode()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", len(hjson))
    blob += hjson
    for _, arr in entries:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_params(path: str) -> ModelParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)", offset=0)
    stored = struct.unpack_from("<I", data, len(data) - 4)[0]
    actual = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored != actual:
        raise FormatError("checkpoint CRC mismatch", offset=len(data) - 4)
    hlen = struct.unpack_from("<I", data, 4)[0]
    header = json.loads(data[8: 8 + hlen].decode())
    off = 8 + hlen
    arrays: dict[str, np.ndarray] = {}
    for spec_entry in header["arrays"]:
        shape = tuple(spec_entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        arrays[spec_entry["name"]] = arr.reshape(shape).copy()
        off += 8 * count
    if off != len(data) - 4:
        raise FormatError("checkpoint payload length mismatch", offset=off)

    n_layers = header["num_encoder_layers"]
    encoder = [arrays[f"enc_{i}"] for i in range(n_layers)]
    names = ("w1", "b1", "w2", "b2")
    projection = [arrays[f"proj_{n}"] for n in names]
    rule_mlp = param_mlp = None
    if header["has_rule_branch"]:
        rule_mlp = [arrays[f"rule_{n}"] for n in names]
        param_mlp = [arrays[f"gate_{n}"] for n in names]
    return ModelParams(encoder=encoder, projection=projection,
                       rule_mlp=rule_mlp, param_mlp=param_mlp,
                       activation=header["activation"])
