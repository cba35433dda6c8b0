"""The contrastive, rule, and alignment losses plus their weighted total.

Everything here returns a scalar Var on the callers' tape so a single
backward pass covers the whole objective. Sign convention: the printed
per-node contrastive term is a log-probability; training minimizes its
negation, so every loss below is minimized at its optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import (
    ConfigError,
    DegenerateBatchError,
    InsufficientSamplesError,
    ShapeError,
)


@dataclass
class LossBreakdown:
    """One epoch's loss values for the JSON-lines training log."""

    infonce: float
    rule: float
    cross: float
    total: float
    epoch: int

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "infonce": self.infonce,
            "rule": self.rule,
            "cross": self.cross,
            "total": self.total,
        }


def _check_infonce_args(u: Var, v: Var, tau: float) -> None:
    if u.value.shape != v.value.shape:
        raise ShapeError(f"views differ in shape: {u.value.shape} vs {v.value.shape}")
    if u.value.shape[0] < 2:
        raise DegenerateBatchError(
            f"contrastive batch needs N >= 2, got {u.value.shape[0]}")
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")


def infonce(u: Var, v: Var, tau: float) -> Var:
    """Symmetric contrastive loss over two views, applied to projected rows.

    Positive pair (u_i, v_i); negatives are inter-view (u_i, v_k) and
    intra-view (u_i, u_k) for k != i, under temperature-scaled cosine
    similarity. Both view directions are averaged, then negated.

    Runs through the fused similarity op; infonce_composed is the
    operation-by-operation reference it must agree with.
    """
    _check_infonce_args(u, v, tau)
    return ad.infonce_pair(ad.row_normalize(u), ad.row_normalize(v), tau)


def infonce_composed(u: Var, v: Var, tau: float) -> Var:
    """Reference route for infonce built from elementary tape ops; kept to
    cross-check the fused kernel's value and gradient."""
    _check_infonce_args(u, v, tau)
    un = ad.row_normalize(u)
    vn = ad.row_normalize(v)
    e_uv = ad.exp_scaled(ad.matmul(un, ad.transpose(vn)), 1.0 / tau)
    e_uu = ad.exp_scaled(ad.matmul(un, ad.transpose(un)), 1.0 / tau)
    e_vv = ad.exp_scaled(ad.matmul(vn, ad.transpose(vn)), 1.0 / tau)
    pos = ad.diag_part(e_uv)  # shared by both directions

    def direction(e_cross: Var, e_within: Var) -> Var:
        denom = ad.sub(
            ad.add(ad.rowsum(e_cross), ad.rowsum(e_within)),
            ad.diag_part(e_within))
        return ad.mean_all(ad.sub(ad.log(pos), ad.log(denom)))

    l_u = direction(e_uv, e_uu)
    l_v = direction(ad.transpose(e_uv), e_vv)
    return ad.scale(ad.add(l_u, l_v), -0.5)


def _check_rule_args(h_r: Var, tau_rule: float) -> None:
    if tau_rule <= 0:
        raise ConfigError(f"temperature must be positive, got {tau_rule}")
    if h_r.value.ndim != 2 or h_r.value.shape[0] < 1:
        raise ShapeError(f"rule representations must be (N, d), got {h_r.value.shape}")


def rule_loss(h_r: Var, tau_rule: float) -> Var:
    """Self-discrimination over gated rule representations.

    Rows are L2-normalized, pairwise similarities exponentiated at
    tau_rule, and each node's self-term is contrasted against its full row
    sum (diagonal included in the denominator). Fused route; see
    rule_loss_composed for the elementary-op reference.
    """
    _check_rule_args(h_r, tau_rule)
    return ad.self_contrast(ad.row_normalize(h_r), tau_rule)


def rule_loss_composed(h_r: Var, tau_rule: float) -> Var:
    """Reference route for rule_loss built from elementary tape ops."""
    _check_rule_args(h_r, tau_rule)
    z = ad.row_normalize(h_r)
    s = ad.exp_scaled(ad.matmul(z, ad.transpose(z)), 1.0 / tau_rule)
    return ad.mean_all(ad.sub(ad.log(ad.rowsum(s)), ad.log(ad.diag_part(s))))


def cross_loss(h_n: Var, h_r: Var) -> Var:
    """Distribution alignment: MSE between the empirical means (normalized
    by d) plus MSE between the empirical covariances (normalized by d^2)."""
    if h_n.value.shape != h_r.value.shape:
        raise ShapeError(
            f"representations differ in shape: {h_n.value.shape} vs {h_r.value.shape}")
    if h_n.value.shape[0] < 2:
        raise InsufficientSamplesError(
            f"covariance alignment needs N >= 2, got {h_n.value.shape[0]}")
    d_mu = ad.sub(ad.mean_rows(h_n), ad.mean_rows(h_r))
    mse_mean = ad.mean_all(ad.hadamard(d_mu, d_mu))
    d_cov = ad.sub(ad.covariance(h_n), ad.covariance(h_r))
    mse_cov = ad.mean_all(ad.hadamard(d_cov, d_cov))
    return ad.add(mse_mean, mse_cov)


def symmetric_cross_loss(u: Var, v: Var, h_r: Var) -> Var:
    """Average of the alignment loss against each view (the rule branch
    establishes a loss with U and with V; averaging keeps the magnitude
    comparable to a single-view term)."""
    return ad.scale(ad.add(cross_loss(u, h_r), cross_loss(v, h_r)), 0.5)


def total_loss(infonce_term: Var, rule_term: Var, cross_term: Var,
               alpha_rule: float, alpha_cross: float) -> Var:
    """infonce + alpha_rule * rule + alpha_cross * cross.

    cross_term is expected to already be the two-view average (see
    symmetric_cross_loss). With both weights zero the additions contribute
    exact IEEE zeros, so the result is bit-identical to the bare
    contrastive term.
    """
    if alpha_rule < 0 or alpha_cross < 0:
        raise ConfigError("loss weights must be nonnegative")
    return ad.add(
        ad.add(infonce_term, ad.scale(rule_term, alpha_rule)),
        ad.scale(cross_term, alpha_cross))


def breakdown(infonce_term: Var, rule_term: Var, cross_term: Var,
              total_term: Var, epoch: int) -> LossBreakdown:
    return LossBreakdown(
        infonce=float(infonce_term.value),
        rule=float(rule_term.value),
        cross=float(cross_term.value),
        total=float(total_term.value),
        epoch=epoch,
    )
