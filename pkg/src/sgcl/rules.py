"""Structural-commonsense rule weights and the PCA rule features.

Two per-node weight vectors are computed once, before training:

* topology rule w: nodes whose first-order neighbors have a small degree sum
  get larger weight (log-normalized, anchored so the largest-context node
  sits at zero);
* similarity rule s: nodes whose neighborhood feature similarity is close to
  their global feature similarity get larger weight.

Both are pure functions of the immutable graph; nothing here is learned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .graph import Graph
from .linalg import covariance

_PCA_SEED = 1729
_POWER_ITER_CAP = 1000
_EIGENVALUE_TOL = 1e-9


@dataclass
class RuleWeights:
    """Per-node weights: w from the topology rule, s from the similarity rule."""

    w: np.ndarray
    s: np.ndarray


@dataclass
class PcaModel:
    mean: np.ndarray        # (F,)
    components: np.ndarray  # (k, F), row-orthonormal
    k: int


# ---------------------------------------------------------------------------
# topology rule


def ntsc_profile(g: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (degree, d_sum, w) where d_sum_i sums the degrees of i's
    neighbors and w_i = max_j log(1+d_sum_j) - log(1+d_sum_i)."""
    a = g.adjacency.to_scipy()
    degree = np.asarray(a.sum(axis=1)).ravel()
    d_sum = a @ degree
    h = np.log1p(d_sum)
    w = h.max(initial=0.0) - h if len(h) else h
    return degree, d_sum, w


def ntsc_weights(g: Graph) -> np.ndarray:
    return ntsc_profile(g)[2]


# ---------------------------------------------------------------------------
# PCA (covariance power iteration with deflation)


def _start_vector(f: int, j: int, found: np.ndarray) -> np.ndarray:
    for attempt in range(10):
        rng = np.random.default_rng(_PCA_SEED + 100_003 * attempt + j)
        v = rng.normal(size=f)
        if len(found):
            v -= found.T @ (found @ v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            return v / nrm
    raise NumericError(f"could not seed start vector for component {j}")


def _sign_fix(v: np.ndarray) -> np.ndarray:
    nz = np.nonzero(np.abs(v) > 1e-12)[0]
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def pca_fit(x: np.ndarray, k: int) -> PcaModel:
    """Top-k principal directions of the rows of x.

    Components are extracted one at a time by power iteration on the sample
    covariance, deflating previously found directions; each is sign-fixed so
    its first nonzero entry is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("pca_fit expects a 2-D matrix")
    n, f = x.shape
    if not 1 <= k <= min(n, f):
        raise ConfigError(f"k={k} outside [1, min(N={n}, F={f})]")
    mean = x.mean(axis=0)
    c = covariance(x)

    comps = np.zeros((k, f))
    lams = np.zeros(k)
    for j in range(k):
        found = comps[:j]

        def matvec(vec: np.ndarray) -> np.ndarray:
            out = c @ vec
            if j:
                out -= found.T @ (lams[:j] * (found @ vec))
            return out

        v = _start_vector(f, j, found)
        lam_prev = np.inf
        for _ in range(_POWER_ITER_CAP):
            w = matvec(v)
            if j:
                w -= found.T @ (found @ w)
            nrm = np.linalg.norm(w)
            if nrm < 1e-30:
                # deflated operator annihilates v: remaining spectrum is zero
                lam = 0.0
                break
            v = w / nrm
            lam = float(v @ matvec(v))
            # absolute or relative: large-spectrum inputs cannot settle below
            # an absolute 1e-9 once float noise in the quotient exceeds it
            if abs(lam - lam_prev) <= _EIGENVALUE_TOL * max(1.0, abs(lam)):
                break
            lam_prev = lam
        else:
            raise NumericError(
                f"power iteration failed to converge for component {j} "
                f"after {_POWER_ITER_CAP} iterations; the spectrum is likely "
                f"near-degenerate at this depth, try a smaller pca_dim")
        comps[j] = _sign_fix(v)
        lams[j] = max(lam, 0.0)
    return PcaModel(mean=mean, components=comps, k=k)


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.components.shape[1]:
        raise ShapeError(
            f"pca_transform: x {x.shape} vs components {model.components.shape}")
    return (x - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# similarity rule


def lgtc_profile(
    x_reduced: np.ndarray, g: Graph
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (AS, GS, Diff, s).

    AS(v): mean cosine similarity between v and its first-order neighbors;
    GS(v): mean cosine similarity between v and every other node (self
    excluded, divisor N-1). Isolated nodes take AS := GS, landing on the
    neutral Diff = 0.5. Diff is clipped into [0,1] so the documented range
    holds even for adversarial embeddings with negative similarities.

    GS uses the identity sum_j z_i.z_j = z_i.(sum_j z_j) on unit rows, which
    is exact and linear-time, so no sampling fallback is needed at any N.
    """
    x = np.asarray(x_reduced, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.n:
        raise ShapeError(f"x_reduced shape {x.shape} does not match n={g.n}")
    n = g.n
    if n < 2:
        half = np.full(n, 0.5)
        return half.copy(), half.copy(), half, np.zeros(n)

    norms = np.linalg.norm(x, axis=1, keepdims=True)
    z = np.where(norms > 0, x / np.maximum(norms, 1e-300), 0.0)
    self_sim = (norms[:, 0] > 0).astype(np.float64)  # z_i.z_i

    a = g.adjacency.to_scipy()
    degree = np.asarray(a.sum(axis=1)).ravel()
    neighbor_sum = np.einsum("ij,ij->i", a @ z, z)
    total = z @ z.sum(axis=0)
    gs = (total - self_sim) / (n - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        as_ = np.where(degree > 0, neighbor_sum / np.maximum(degree, 1.0), gs)
    diff = np.clip((as_ - gs + 1.0) / 2.0, 0.0, 1.0)
    s = diff.max(initial=0.0) - diff
    return as_, gs, diff, s


def lgtc_weights(x_reduced: np.ndarray, g: Graph) -> np.ndarray:
    return lgtc_profile(x_reduced, g)[3]


# ---------------------------------------------------------------------------
# one-shot bundle used by the trainer


def compute_rules(g: Graph, pca_dim: int) -> tuple[RuleWeights, PcaModel, np.ndarray]:
    """Fit PCA on the raw features and derive both rule vectors.

    One fitted model serves double duty: its projection is the similarity
    rule's reduced feature space AND the input to the rule-representation
    branch. Returns (weights, model, x_reduced).
    """
    k = min(pca_dim, g.features.shape[1], g.n)
    model = pca_fit(g.features, k)
    x_reduced = pca_transform(model, g.features)
    w = ntsc_weights(g)
    s = lgtc_weights(x_reduced, g)
    return RuleWeights(w=w, s=s), model, x_reduced
