"""Installation property suite.

Re-derives the core numerical guarantees on the spot: gradient checks for
every tape operation, sparse/dense matmul agreement, both structural rule
vectors against brute-force per-node loops, and the loss identities. Meant
to be run by an operator (`selfcheck` subcommand) on a fresh install; the
whole sweep takes a few seconds.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from . import losses
from .linalg import SparseCSR, spmm
from .rules import lgtc_profile, ntsc_profile
from .synthetic import random_graph

_GRAD_TOL = 1e-4
_SPMM_TOL = 1e-12
_RULE_TOL = 1e-10
_LOSS_TOL = 1e-10


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# gradient checks, one per tape operation


def _grad_check_suite() -> None:
    r = _rng(0)
    a34 = r.standard_normal((3, 4))
    b34 = r.standard_normal((3, 4))
    b45 = r.standard_normal((4, 5))
    q31 = r.standard_normal((3, 1))
    pos = np.abs(r.standard_normal((3, 4))) + 0.5
    # keep relu/sign-sensitive inputs away from the kink at 0
    off0 = a34 + np.sign(a34) * 0.2
    sp_fixed = SparseCSR.from_dense((r.random((5, 3)) < 0.4) * r.standard_normal((5, 3)))

    cases = {
        "matmul": ([a34, b45], lambda t, l: ad.sum_all(ad.matmul(l[0], l[1]))),
        "spmm": ([r.standard_normal((3, 6))], lambda t, l: ad.sum_all(ad.spmm(sp_fixed, l[0]))),
        "transpose": ([a34], lambda t, l: ad.sum_all(ad.transpose(l[0]))),
        "add": ([a34, b34], lambda t, l: ad.sum_all(ad.add(l[0], l[1]))),
        "sub": ([a34, b34], lambda t, l: ad.sum_all(ad.sub(l[0], l[1]))),
        "hadamard": ([a34, b34], lambda t, l: ad.sum_all(ad.hadamard(l[0], l[1]))),
        "scale": ([a34], lambda t, l: ad.sum_all(ad.scale(l[0], -1.7))),
        "add_rowvec": ([a34, b34[:1]], lambda t, l: ad.sum_all(ad.add_rowvec(l[0], l[1]))),
        "scale_rows": ([a34, q31], lambda t, l: ad.sum_all(ad.scale_rows(l[0], l[1]))),
        "relu": ([off0], lambda t, l: ad.sum_all(ad.relu(l[0]))),
        "sigmoid": ([a34], lambda t, l: ad.sum_all(ad.sigmoid(l[0]))),
        "exp": ([a34], lambda t, l: ad.sum_all(ad.exp(l[0]))),
        "exp_scaled": ([a34], lambda t, l: ad.sum_all(ad.exp_scaled(l[0], 2.0))),
        "log": ([pos], lambda t, l: ad.sum_all(ad.log(l[0]))),
        "log1p": ([pos], lambda t, l: ad.sum_all(ad.log1p(l[0]))),
        "row_normalize": ([off0], lambda t, l: ad.sum_all(ad.row_normalize(l[0]))),
        "diag_part": ([b34.T @ b34], lambda t, l: ad.sum_all(ad.diag_part(l[0]))),
        "rowsum": ([a34], lambda t, l: ad.sum_all(ad.rowsum(l[0]))),
        "mean_rows": ([a34], lambda t, l: ad.sum_all(ad.mean_rows(l[0]))),
        "sum_all": ([a34], lambda t, l: ad.sum_all(l[0])),
        "mean_all": ([a34], lambda t, l: ad.mean_all(l[0])),
        "covariance": ([a34], lambda t, l: ad.sum_all(ad.covariance(l[0]))),
        "concat_cols": ([a34, b34], lambda t, l: ad.sum_all(ad.concat_cols(l[0], l[1]))),
        "infonce_pair": (
            [ad_row(a34), ad_row(b34)],
            lambda t, l: ad.infonce_pair(l[0], l[1], 0.7),
        ),
        "self_contrast": ([ad_row(a34)], lambda t, l: ad.self_contrast(l[0], 0.7)),
    }
    for name, (params, fn) in cases.items():
        err = ad.grad_check(fn, params)
        if not err < _GRAD_TOL:
            raise AssertionError(f"grad_check({name}) error {err:.3e} >= {_GRAD_TOL}")


def ad_row(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# sparse kernel agreement


def _spmm_suite() -> None:
    r = _rng(1)
    for rows, cols, width, density in ((7, 5, 3, 0.3), (16, 16, 8, 0.05),
                                       (9, 12, 4, 0.9), (6, 6, 2, 0.0)):
        dense = (r.random((rows, cols)) < density) * r.standard_normal((rows, cols))
        b = r.standard_normal((cols, width))
        got = spmm(SparseCSR.from_dense(dense), b)
        err = np.abs(got - dense @ b).max(initial=0.0)
        if not err < _SPMM_TOL:
            raise AssertionError(f"spmm deviates from dense by {err:.3e}")


# ---------------------------------------------------------------------------
# rule vectors against per-node loops


def _ntsc_oracle(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    deg = [sum(1 for j in range(n) if adj[i, j] != 0) for i in range(n)]
    d_sum = [sum(deg[j] for j in range(n) if adj[i, j] != 0) for i in range(n)]
    h = [math.log(1 + v) for v in d_sum]
    top = max(h) if h else 0.0
    return np.array([top - hi for hi in h])


def _lgtc_oracle(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = adj.shape[0]

    def cos(i, j):
        ni, nj = np.linalg.norm(x[i]), np.linalg.norm(x[j])
        if ni == 0.0 or nj == 0.0:
            return 0.0
        return float(x[i] @ x[j]) / (ni * nj)

    diff = []
    for i in range(n):
        others = [cos(i, j) for j in range(n) if j != i]
        gs = sum(others) / (n - 1)
        neigh = [cos(i, j) for j in range(n) if adj[i, j] != 0]
        as_ = sum(neigh) / len(neigh) if neigh else gs
        diff.append(min(max((as_ - gs + 1.0) / 2.0, 0.0), 1.0))
    top = max(diff)
    return np.array([top - d for d in diff])


def _rule_suite() -> None:
    r = _rng(2)
    for trial in range(50):
        n = int(r.integers(2, 65))
        g = random_graph(n, p=float(r.uniform(0.05, 0.5)), seed=trial)
        adj = g.adjacency.to_dense()
        _, _, w = ntsc_profile(g)
        w_err = np.abs(w - _ntsc_oracle(adj)).max(initial=0.0)
        if not w_err < _RULE_TOL:
            raise AssertionError(f"ntsc deviates by {w_err:.3e} on trial {trial}")
        x = np.asarray(g.features.to_dense() if hasattr(g.features, "to_dense")
                       else g.features, dtype=np.float64)
        _, _, _, s = lgtc_profile(x, g)
        s_err = np.abs(s - _lgtc_oracle(adj, x)).max(initial=0.0)
        if not s_err < _RULE_TOL:
            raise AssertionError(f"lgtc deviates by {s_err:.3e} on trial {trial}")


# ---------------------------------------------------------------------------
# loss identities


def _loss_identity_suite() -> None:
    r = _rng(3)
    u = r.standard_normal((6, 4))
    v = r.standard_normal((6, 4))

    def infonce_value(a, b):
        t = ad.Tape()
        return float(losses.infonce(t.leaf(a), t.leaf(b), tau=0.5).value)

    base = infonce_value(u, v)
    for c in (1e-10, 1e6):
        delta = abs(infonce_value(c * u, c * v) - base)
        if not delta < _LOSS_TOL:
            raise AssertionError(f"infonce not scale invariant at c={c}: {delta:.3e}")

    def cross_value(a, b):
        t = ad.Tape()
        return float(losses.cross_loss(t.leaf(a), t.leaf(b)).value)

    h = r.standard_normal((8, 5))
    if cross_value(h, h) != 0.0:
        raise AssertionError("cross_loss is nonzero on identical inputs")
    # reflection about the mean keeps both moments, changes every row
    mirrored = 2.0 * h.mean(axis=0) - h
    matched = cross_value(h, mirrored)
    if not matched < _LOSS_TOL:
        raise AssertionError(f"cross_loss {matched:.3e} on moment-matched inputs")
    shifted = cross_value(h, h + 1.0)
    if not shifted > 0.0:
        raise AssertionError("cross_loss failed to flag a mean shift")

    t = ad.Tape()
    rl = float(losses.rule_loss(t.leaf(r.standard_normal((6, 4))), 0.5).value)
    if not rl > 0.0:
        raise AssertionError(f"rule_loss {rl} is not positive")


CHECKS = (
    ("gradients", _grad_check_suite),
    ("sparse-matmul", _spmm_suite),
    ("rule-oracles", _rule_suite),
    ("loss-identities", _loss_identity_suite),
)


def run_selfcheck(emit=print) -> bool:
    """Run every check, emit one PASS/FAIL line each, return overall ok."""
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report and keep going; operators want the full picture
            ok = False
            emit(f"FAIL {name}: {exc}")
        else:
            emit(f"PASS {name}")
    return ok
