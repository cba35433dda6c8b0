"""End-to-end training: augment two views per epoch, encode, combine the
three losses, Adam-update. Rule weights and PCA features are computed once
before the loop; only encoder/MLP parameters learn.

Determinism contract: the entire trajectory is a pure function of (graph
bytes, config). Parameter initialization and augmentation draws come from
two independent streams spawned from the config seed, so a rule-free run and
a rule-enabled run share identical augmentations and identical encoder
initialization (rule parameters are drawn after the shared prefix).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tape, Var
from .errors import ConfigError, NumericError
from .graph import Graph, drop_edges, mask_features, normalized_adjacency
from .linalg import SparseCSR
from .losses import (
    LossBreakdown,
    infonce,
    rule_loss,
    symmetric_cross_loss,
    total_loss,
)
from .model import (
    ModelParams,
    gcn_forward,
    init_params,
    leaf_params,
    param_mlp_forward,
    projection_forward,
    rule_mlp_forward,
    scale_rule_repr,
)
from .rules import compute_rules

# features sparser than this train through the sparse kernel
_SPARSE_FEATURE_DENSITY = 0.1


@dataclass
class TrainConfig:
    """One field per hyperparameter table column, plus reproducibility knobs."""

    tau: float = 0.5
    tau_rule: float = 0.5
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    num_epochs: int = 200
    hidden_dim: int = 256
    mlp_hidden_dim: int = 128
    activation: str = "relu"
    drop_edge_rate_1: float = 0.2
    drop_edge_rate_2: float = 0.2
    drop_feature_rate_1: float = 0.2
    drop_feature_rate_2: float = 0.2
    alpha_rule: float = 1.0
    alpha_cross: float = 1.0
    pca_dim: int = 128
    num_layers: int = 2
    seed: int = 0

    def validate(self) -> None:
        for name in ("drop_edge_rate_1", "drop_edge_rate_2",
                     "drop_feature_rate_1", "drop_feature_rate_2"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name}={rate} outside [0, 1]")
        if self.tau <= 0 or self.tau_rule <= 0:
            raise ConfigError("temperatures must be positive")
        if self.num_epochs < 1:
            raise ConfigError(f"num_epochs must be >= 1, got {self.num_epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.alpha_rule < 0 or self.alpha_cross < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.hidden_dim < 1 or self.mlp_hidden_dim < 1 or self.pca_dim < 1:
            raise ConfigError("dimensions must be positive")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path: str) -> "TrainConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        """Hash of the canonicalized config; stamped into every artifact so
        any result can be rerun exactly."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: ModelParams, grads: dict[str, np.ndarray],
              state: AdamState, lr: float, weight_decay: float) -> None:
    """One bias-corrected Adam update, in place on the master arrays.
    Weight decay enters as a coupled L2 term added to each gradient."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, arr in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r} "
                               f"at step {state.t}")
        if weight_decay:
            g = g + weight_decay * arr
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# forward assembly (shared by the epoch loop and by gradient-check tests)


@dataclass
class EpochInputs:
    """Everything one epoch's loss needs besides the parameters."""

    a_hat_1: SparseCSR
    x_1: SparseCSR | np.ndarray
    a_hat_2: SparseCSR
    x_2: SparseCSR | np.ndarray
    cfg: TrainConfig
    include_rules: bool
    rule_features: np.ndarray | None = None  # (N, k) PCA-reduced rule-MLP input
    rule_ws: np.ndarray | None = None        # (N, 2) stacked [w, s]


def _feature_operand(tape: Tape, x) -> SparseCSR | Var:
    return x if isinstance(x, SparseCSR) else tape.constant(x)


def epoch_loss(tape: Tape, leaves: dict[str, Var], inputs: EpochInputs
               ) -> tuple[Var, Var, Var | None, Var | None]:
    """Build one epoch's loss graph; returns (total, infonce, rule, cross)."""
    cfg = inputs.cfg
    enc = [leaves[f"enc_{i}"] for i in range(cfg.num_layers)]
    proj = [leaves[f"proj_{n}"] for n in ("w1", "b1", "w2", "b2")]

    u = gcn_forward(inputs.a_hat_1, _feature_operand(tape, inputs.x_1), enc)
    v = gcn_forward(inputs.a_hat_2, _feature_operand(tape, inputs.x_2), enc)
    i_term = infonce(projection_forward(u, proj),
                     projection_forward(v, proj), cfg.tau)
    if not inputs.include_rules:
        return i_term, i_term, None, None

    rule = [leaves[f"rule_{n}"] for n in ("w1", "b1", "w2", "b2")]
    gate = [leaves[f"gate_{n}"] for n in ("w1", "b1", "w2", "b2")]
    h_r_prime = rule_mlp_forward(tape.constant(inputs.rule_features), rule)
    q = param_mlp_forward(tape.constant(inputs.rule_ws), gate)
    h_r = scale_rule_repr(q, h_r_prime)
    r_term = rule_loss(h_r, cfg.tau_rule)
    c_term = symmetric_cross_loss(u, v, h_r)
    total = total_loss(i_term, r_term, c_term, cfg.alpha_rule, cfg.alpha_cross)
    return total, i_term, r_term, c_term


# ---------------------------------------------------------------------------
# training loop


def _should_use_sparse_features(features: np.ndarray) -> bool:
    density = np.count_nonzero(features) / max(1, features.size)
    return density <= _SPARSE_FEATURE_DENSITY


def _view_feature_operand(features: np.ndarray, sparse_mode: bool):
    x64 = np.asarray(features, dtype=np.float64)
    if sparse_mode:
        return SparseCSR.from_scipy(sp.csr_matrix(x64))
    return x64


def prepare_epoch_inputs(g: Graph, cfg: TrainConfig, include_rules: bool,
                         aug_rng: np.random.Generator, sparse_mode: bool,
                         rule_features: np.ndarray | None,
                         rule_ws: np.ndarray | None) -> EpochInputs:
    """Draw the two stochastic views for one epoch (fixed draw order: view-1
    edges, view-1 mask, view-2 edges, view-2 mask)."""
    v1 = mask_features(drop_edges(g, cfg.drop_edge_rate_1, aug_rng),
                       cfg.drop_feature_rate_1, aug_rng)
    v2 = mask_features(drop_edges(g, cfg.drop_edge_rate_2, aug_rng),
                       cfg.drop_feature_rate_2, aug_rng)
    return EpochInputs(
        a_hat_1=normalized_adjacency(v1),
        x_1=_view_feature_operand(v1.features, sparse_mode),
        a_hat_2=normalized_adjacency(v2),
        x_2=_view_feature_operand(v2.features, sparse_mode),
        cfg=cfg,
        include_rules=include_rules,
        rule_features=rule_features,
        rule_ws=rule_ws,
    )


def train(g: Graph, cfg: TrainConfig, include_rules: bool | None = None,
          on_epoch=None) -> tuple[ModelParams, list[LossBreakdown]]:
    """Run the full training loop; returns final parameters and the
    per-epoch loss log. include_rules defaults to "any loss weight is
    nonzero"; passing False forces the plain contrastive path (the ablation
    baseline), which a zero-weight rule run must reproduce bit-exactly.
    on_epoch, if given, is called with each LossBreakdown as it is logged.
    """
    cfg.validate()
    if include_rules is None:
        include_rules = cfg.alpha_rule > 0 or cfg.alpha_cross > 0

    root = np.random.SeedSequence(cfg.seed)
    init_ss, aug_ss = root.spawn(2)
    aug_rng = np.random.default_rng(aug_ss)

    rule_features = rule_ws = None
    rule_in_dim = 1
    if include_rules:
        weights, _, x_reduced = compute_rules(g, cfg.pca_dim)
        rule_features = x_reduced
        rule_ws = np.stack([weights.w, weights.s], axis=1)
        rule_in_dim = x_reduced.shape[1]

    params = init_params(cfg, in_dim=g.features.shape[1], rule_in_dim=rule_in_dim,
                         rng=np.random.default_rng(init_ss),
                         include_rules=include_rules)
    sparse_mode = _should_use_sparse_features(g.features)
    state = AdamState()
    log: list[LossBreakdown] = []

    for epoch in range(1, cfg.num_epochs + 1):
        inputs = prepare_epoch_inputs(
            g, cfg, include_rules, aug_rng, sparse_mode, rule_features, rule_ws)
        tape = Tape()
        leaves = leaf_params(tape, params)
        total, i_term, r_term, c_term = epoch_loss(tape, leaves, inputs)
        if not np.isfinite(total.value):
            raise NumericError(f"loss diverged at epoch {epoch}")
        grads = tape.backward(total)
        adam_step(params, {name: grads[leaf] for name, leaf in leaves.items()},
                  state, cfg.learning_rate, cfg.weight_decay)
        entry = LossBreakdown(
            infonce=float(i_term.value),
            rule=float(r_term.value) if r_term is not None else 0.0,
            cross=float(c_term.value) if c_term is not None else 0.0,
            total=float(total.value),
            epoch=epoch,
        )
        log.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
    return params, log


def embed(g: Graph, params: ModelParams) -> np.ndarray:
    """Encoder output on the clean graph (no augmentation, no projection)."""
    a_hat = normalized_adjacency(g)
    tape = Tape()
    weights = [tape.constant(w) for w in params.encoder]
    if _should_use_sparse_features(g.features):
        x = SparseCSR.from_scipy(sp.csr_matrix(np.asarray(g.features, np.float64)))
    else:
        x = tape.constant(np.asarray(g.features, dtype=np.float64))
    return np.array(gcn_forward(a_hat, x, weights).value)
