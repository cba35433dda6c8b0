"""Tape-based reverse-mode automatic differentiation.

A Tape records every primitive operation in creation order, which is a valid
topological order because an op can only consume already-created nodes. The
backward pass walks that record once in reverse, accumulating vector-Jacobian
products into each node that requires a gradient.

The op vocabulary is deliberately small: dense/sparse matmul, elementwise
maps, row normalization, reductions, covariance, column concatenation, and
diagonal extraction. All values are float64 ndarrays; scalars are 0-d arrays.
Vectors travel as (N,1) or (1,F) two-dimensional arrays so shape checks stay
strict (no general broadcasting).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, NumericError, ShapeError
from .linalg import SparseCSR
from .linalg import covariance as _covariance_value


class Var:
    """One tape node: a value plus the plumbing to backpropagate into it."""

    __slots__ = ("tape", "value", "grad", "requires_grad", "is_leaf", "_vjp",
                 "_idx", "name", "_grad_shared")

    def __init__(self, tape: "Tape", value: np.ndarray, requires_grad: bool,
                 is_leaf: bool = False, vjp=None, name: str | None = None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.is_leaf = is_leaf
        self._vjp = vjp
        self._idx = -1
        self.name = name
        self._grad_shared = False
        tape._register(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self) -> str:
        tag = self.name or ("leaf" if self.is_leaf else "node")
        return f"Var({tag}, shape={self.value.shape})"


class Tape:
    """Single-writer operation record; not shared across training runs."""

    def __init__(self):
        self.nodes: list[Var] = []

    def _register(self, var: Var) -> None:
        var._idx = len(self.nodes)
        self.nodes.append(var)

    def leaf(self, value, name: str | None = None) -> Var:
        """A tracked parameter. The array is copied so later in-place updates
        to the caller's buffer cannot corrupt recorded values."""
        v = np.array(value, dtype=np.float64)
        return Var(self, v, requires_grad=True, is_leaf=True, name=name)

    def constant(self, value, name: str | None = None) -> Var:
        v = np.asarray(value, dtype=np.float64)
        return Var(self, v, requires_grad=False, name=name)

    def backward(self, loss: Var) -> dict[Var, np.ndarray]:
        """Backpropagate from a scalar loss.

        Returns a map from every leaf on the tape to its gradient; leaves the
        loss does not depend on get a zero gradient.
        """
        if loss.tape is not self:
            raise ContractError("loss belongs to a different tape")
        if np.ndim(loss.value) != 0:
            raise ContractError(f"backward requires a scalar loss, got shape {loss.value.shape}")
        for node in self.nodes:
            node.grad = None
            node._grad_shared = False
        loss.grad = np.array(1.0)
        for node in reversed(self.nodes[: loss._idx + 1]):
            if node.grad is None or node._vjp is None:
                continue
            node._vjp(node.grad)
        grads: dict[Var, np.ndarray] = {}
        for node in self.nodes:
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.zeros_like(node.value)
                grads[node] = node.grad
        return grads


def _accum(var: Var, g: np.ndarray) -> None:
    """Accumulate a gradient contribution.

    The first contribution is adopted without copying and marked shared
    (it may be a view of a child's final gradient, or non-writable when it
    came from a broadcast). A second contribution forces a fresh owned
    array; only owned buffers are mutated in place. Children's gradients
    are final before any parent vjp runs (reverse topological order), so
    adopting a view is safe.
    """
    if not var.requires_grad:
        return
    if var.grad is None:
        var.grad = g
        var._grad_shared = True
    elif var._grad_shared:
        var.grad = var.grad + g
        var._grad_shared = False
    else:
        var.grad += g


def _accum_diag(var: Var, gvec: np.ndarray) -> None:
    """Add gvec onto the diagonal of var's gradient without materializing a
    full matrix when an owned buffer already exists."""
    if not var.requires_grad:
        return
    if var.grad is None:
        buf = np.zeros_like(var.value)
        np.fill_diagonal(buf, gvec)
        var.grad = buf
        var._grad_shared = False
        return
    if var._grad_shared:
        var.grad = np.array(var.grad)
        var._grad_shared = False
    np.einsum("ii->i", var.grad)[...] += gvec


def _same_tape(*vars_: Var) -> Tape:
    t = vars_[0].tape
    for v in vars_[1:]:
        if v.tape is not t:
            raise ContractError("operands live on different tapes")
    return t


def _need2d(v: Var, op: str) -> None:
    if v.value.ndim != 2:
        raise ShapeError(f"{op} expects a 2-D operand, got shape {v.value.shape}")


def _result(tape: Tape, value: np.ndarray, parents: Sequence[Var], vjp) -> Var:
    req = any(p.requires_grad for p in parents)
    return Var(tape, value, requires_grad=req, vjp=vjp if req else None)


# ---------------------------------------------------------------------------
# products


def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    _need2d(a, "matmul")
    _need2d(b, "matmul")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: {a.value.shape} x {b.value.shape}")
    out = a.value @ b.value

    def vjp(g):
        # skip the dead product when one side is a constant (e.g. the
        # feature matrix feeding the first encoder layer)
        if a.requires_grad:
            _accum(a, g @ b.value.T)
        if b.requires_grad:
            _accum(b, a.value.T @ g)

    return _result(tape, out, (a, b), vjp)


def spmm(s: SparseCSR, b: Var) -> Var:
    """Sparse-constant times dense; differentiable w.r.t. the dense side only."""
    _need2d(b, "spmm")
    if s.cols != b.value.shape[0]:
        raise ShapeError(f"spmm: sparse {s.rows}x{s.cols} vs dense {b.value.shape}")
    out = s.to_scipy() @ b.value

    def vjp(g):
        _accum(b, s.to_scipy_t() @ g)

    return _result(b.tape, out, (b,), vjp)


def transpose(a: Var) -> Var:
    _need2d(a, "transpose")

    def vjp(g):
        _accum(a, g.T)

    return _result(a.tape, a.value.T, (a,), vjp)


# ---------------------------------------------------------------------------
# same-shape arithmetic


def _check_same_shape(a: Var, b: Var, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


def add(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "add")

    def vjp(g):
        _accum(a, g)
        _accum(b, g)

    return _result(tape, a.value + b.value, (a, b), vjp)


def sub(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "sub")

    def vjp(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(tape, a.value - b.value, (a, b), vjp)


def hadamard(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "hadamard")

    def vjp(g):
        _accum(a, g * b.value)
        _accum(b, g * a.value)

    return _result(tape, a.value * b.value, (a, b), vjp)


def scale(a: Var, c: float) -> Var:
    c = float(c)

    def vjp(g):
        _accum(a, g * c)

    return _result(a.tape, a.value * c, (a,), vjp)


def add_rowvec(m: Var, v: Var) -> Var:
    """(N,F) + (1,F) broadcast add; the bias pattern."""
    tape = _same_tape(m, v)
    _need2d(m, "add_rowvec")
    if v.value.shape != (1, m.value.shape[1]):
        raise ShapeError(f"add_rowvec: bias {v.value.shape} vs matrix {m.value.shape}")

    def vjp(g):
        _accum(m, g)
        _accum(v, g.sum(axis=0, keepdims=True))

    return _result(tape, m.value + v.value, (m, v), vjp)


def scale_rows(m: Var, q: Var) -> Var:
    """Row i of m multiplied by q_i; q has shape (N,1)."""
    tape = _same_tape(m, q)
    _need2d(m, "scale_rows")
    if q.value.shape != (m.value.shape[0], 1):
        raise ShapeError(f"scale_rows: q {q.value.shape} vs matrix {m.value.shape}")

    def vjp(g):
        _accum(m, g * q.value)
        _accum(q, (g * m.value).sum(axis=1, keepdims=True))

    return _result(tape, m.value * q.value, (m, q), vjp)


# ---------------------------------------------------------------------------
# elementwise maps


def relu(a: Var) -> Var:
    out = np.maximum(a.value, 0.0)

    def vjp(g):
        _accum(a, g * (a.value > 0.0))

    return _result(a.tape, out, (a,), vjp)


def sigmoid(a: Var) -> Var:
    out = expit(a.value)

    def vjp(g):
        _accum(a, g * out * (1.0 - out))

    return _result(a.tape, out, (a,), vjp)


def exp(a: Var) -> Var:
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    if out.size and not np.isfinite(out.max()):
        raise NumericError("exp overflow produced non-finite entries")

    def vjp(g):
        _accum(a, g * out)

    return _result(a.tape, out, (a,), vjp)


def exp_scaled(a: Var, c: float) -> Var:
    """exp(c * a) in one node; the workhorse of the temperature-scaled
    similarity matrices, fused to avoid an intermediate scale node."""
    c = float(c)
    with np.errstate(over="ignore"):
        out = a.value * c
        np.exp(out, out=out)
    if out.size and not np.isfinite(out.max()):
        raise NumericError("exp overflow produced non-finite entries")

    def vjp(g):
        contrib = g * out
        contrib *= c
        _accum(a, contrib)

    return _result(a.tape, out, (a,), vjp)


def log(a: Var) -> Var:
    if np.any(a.value <= 0.0):
        raise NumericError("log requires strictly positive entries")
    out = np.log(a.value)

    def vjp(g):
        _accum(a, g / a.value)

    return _result(a.tape, out, (a,), vjp)


def log1p(a: Var) -> Var:
    if np.any(a.value <= -1.0):
        raise NumericError("log1p requires entries > -1")
    out = np.log1p(a.value)

    def vjp(g):
        _accum(a, g / (1.0 + a.value))

    return _result(a.tape, out, (a,), vjp)


def elementwise(m: Var, fn: str, c: float | None = None) -> Var:
    """Dispatcher over the fixed elementwise vocabulary."""
    if fn == "relu":
        return relu(m)
    if fn == "sigmoid":
        return sigmoid(m)
    if fn == "exp":
        return exp(m)
    if fn == "log1p":
        return log1p(m)
    if fn == "scale":
        if c is None:
            raise ContractError("scale requires a constant factor")
        return scale(m, c)
    raise ContractError(f"unknown elementwise fn {fn!r}")


# ---------------------------------------------------------------------------
# rows, reductions, structure


def row_normalize(m: Var) -> Var:
    """Rows rescaled to unit L2 norm; all-zero rows stay zero (gradient 0)."""
    _need2d(m, "row_normalize")
    norms = np.linalg.norm(m.value, axis=1, keepdims=True)
    safe = np.maximum(norms, 1e-300)
    out = np.where(norms > 0.0, m.value / safe, 0.0)

    def vjp(g):
        dot = np.sum(g * m.value, axis=1, keepdims=True)
        # zero rows produce garbage in both branch expressions; the where()
        # mask discards it, so silence the transient warnings
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            gm = np.where(norms > 0.0,
                          g / safe - m.value * (((dot / safe) / safe) / safe),
                          0.0)
        _accum(m, gm)

    return _result(m.tape, out, (m,), vjp)


def diag_part(m: Var) -> Var:
    """Diagonal of a square matrix as an (N,1) column."""
    _need2d(m, "diag_part")
    n, c = m.value.shape
    if n != c:
        raise ShapeError(f"diag_part expects a square matrix, got {m.value.shape}")
    out = np.diagonal(m.value).reshape(n, 1).copy()

    def vjp(g):
        _accum_diag(m, g[:, 0])

    return _result(m.tape, out, (m,), vjp)


def rowsum(m: Var) -> Var:
    """(N,F) -> (N,1) row sums."""
    _need2d(m, "rowsum")
    out = m.value.sum(axis=1, keepdims=True)

    def vjp(g):
        _accum(m, np.broadcast_to(g, m.value.shape))

    return _result(m.tape, out, (m,), vjp)


def mean_rows(m: Var) -> Var:
    """(N,F) -> (1,F) column means."""
    _need2d(m, "mean_rows")
    n = m.value.shape[0]
    out = m.value.mean(axis=0, keepdims=True)

    def vjp(g):
        _accum(m, np.broadcast_to(g / n, m.value.shape))

    return _result(m.tape, out, (m,), vjp)


def sum_all(m: Var) -> Var:
    out = np.asarray(m.value.sum())

    def vjp(g):
        _accum(m, np.broadcast_to(g, m.value.shape))

    return _result(m.tape, out, (m,), vjp)


def mean_all(m: Var) -> Var:
    size = m.value.size
    out = np.asarray(m.value.mean())

    def vjp(g):
        _accum(m, np.broadcast_to(g / size, m.value.shape))

    return _result(m.tape, out, (m,), vjp)


def covariance(m: Var) -> Var:
    """Sample covariance of the rows, (1/(N-1)) centered-gram."""
    _need2d(m, "covariance")
    n = m.value.shape[0]
    out = _covariance_value(m.value)
    centered = m.value - m.value.mean(axis=0, keepdims=True)

    def vjp(g):
        # d tr(G^T M_c^T M_c)/dM = M_c (G + G^T); the centering projector is
        # absorbed because the columns of M_c already sum to zero.
        _accum(m, centered @ (g + g.T) / (n - 1))

    return _result(m.tape, out, (m,), vjp)


def concat_cols(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    _need2d(a, "concat_cols")
    _need2d(b, "concat_cols")
    if a.value.shape[0] != b.value.shape[0]:
        raise ShapeError(f"concat_cols: row counts {a.value.shape[0]} vs {b.value.shape[0]}")
    ca = a.value.shape[1]
    out = np.concatenate([a.value, b.value], axis=1)

    def vjp(g):
        _accum(a, g[:, :ca])
        _accum(b, g[:, ca:])

    return _result(tape, out, (a, b), vjp)


# ---------------------------------------------------------------------------
# fused contrastive objectives
#
# These two ops collapse the similarity-matrix subgraphs that dominate
# training cost (three N x N exponentials plus their matmul chains per step).
# Each is the exact scalar the composed ops would produce; the backward is
# derived by hand and cross-checked against the composed route in the tests.


def infonce_pair(a: Var, b: Var, tau: float) -> Var:
    """Symmetric InfoNCE over paired rows with dot-product logits.

    Row i of `a` and row i of `b` form the positive pair; negatives for
    direction a->b are the other rows of b (inter-view) plus the other rows
    of a (intra-view), and symmetrically for b->a. Callers wanting cosine
    logits pass row-normalized inputs. Returns the negated symmetric mean,
    a scalar >= 0 for normalized inputs.
    """
    tape = _same_tape(a, b)
    _need2d(a, "infonce_pair")
    _need2d(b, "infonce_pair")
    _check_same_shape(a, b, "infonce_pair")
    if tau <= 0:
        raise NumericError(f"temperature must be positive, got {tau}")
    n = a.value.shape[0]
    s = 1.0 / tau
    av, bv = a.value, b.value

    e_ab = av @ bv.T
    e_ab *= s
    np.exp(e_ab, out=e_ab)
    e_aa = av @ av.T
    e_aa *= s
    np.exp(e_aa, out=e_aa)
    e_bb = bv @ bv.T
    e_bb *= s
    np.exp(e_bb, out=e_bb)

    # denominator per anchor: full cross-view row plus own-view row minus self
    d_a = e_ab.sum(axis=1) + e_aa.sum(axis=1) - np.diagonal(e_aa)
    d_b = e_ab.sum(axis=0) + e_bb.sum(axis=1) - np.diagonal(e_bb)
    pos = s * np.einsum("ij,ij->", av, bv)
    out = np.asarray((np.log(d_a).sum() + np.log(d_b).sum()) / (2 * n) - pos / n)

    def vjp(g):
        g = float(g)
        ra = (g * s / (2 * n)) / d_a
        rb = (g * s / (2 * n)) / d_b
        # one buffer: E * (ra 1^T + 1 rb^T), then the positive-pair diagonal
        g_ab = np.add.outer(ra, rb)
        g_ab *= e_ab
        np.einsum("ii->i", g_ab)[...] -= g * s / n
        w_a = e_aa * ra[:, None]
        np.fill_diagonal(w_a, 0.0)
        w_b = e_bb * rb[:, None]
        np.fill_diagonal(w_b, 0.0)
        # W + W^T is applied as two products: same dgemm cost as forming the
        # symmetrized matrix, without another N x N buffer
        _accum(a, g_ab @ bv + w_a @ av + w_a.T @ av)
        _accum(b, g_ab.T @ av + w_b @ bv + w_b.T @ bv)

    return _result(tape, out, (a, b), vjp)


def self_contrast(z: Var, tau: float) -> Var:
    """Mean over rows of log-sum-exp(z_i . z_k / tau) minus the self term.

    The scalar the composed route computes as mean(log rowsum(exp(Z Z^T/tau))
    - log diag(...)); the self-similarity stays inside the denominator sum.
    """
    _need2d(z, "self_contrast")
    if tau <= 0:
        raise NumericError(f"temperature must be positive, got {tau}")
    n = z.value.shape[0]
    s = 1.0 / tau
    zv = z.value

    e_zz = zv @ zv.T
    e_zz *= s
    np.exp(e_zz, out=e_zz)
    d = e_zz.sum(axis=1)
    self_sim = s * np.einsum("ij,ij->i", zv, zv)
    out = np.asarray((np.log(d) - self_sim).mean())

    def vjp(g):
        g = float(g)
        w = e_zz * ((g * s / n) / d)[:, None]
        np.einsum("ii->i", w)[...] -= g * s / n
        _accum(z, w @ zv + w.T @ zv)

    return _result(z.tape, out, (z,), vjp)


# ---------------------------------------------------------------------------
# numerical verification


def grad_check(
    loss_fn: Callable[[Tape, list[Var]], Var],
    params: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    loss_fn receives a fresh tape plus leaves built from `params` and must
    return a scalar Var. Error metric per entry:
    |analytic - numeric| / max(1, |analytic|).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ContractError(f"eps {eps} outside [1e-7, 1e-3]")
    work = [np.array(p, dtype=np.float64) for p in params]

    tape = Tape()
    leaves = [tape.leaf(p) for p in work]
    loss = loss_fn(tape, leaves)
    grads = tape.backward(loss)
    analytic = [grads[leaf] for leaf in leaves]

    def value_at() -> float:
        t = Tape()
        out = loss_fn(t, [t.leaf(p) for p in work])
        if np.ndim(out.value) != 0:
            raise ContractError("loss_fn must return a scalar")
        return float(out.value)

    worst = 0.0
    for pi, p in enumerate(work):
        flat = p.reshape(-1)
        numeric = np.zeros(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = value_at()
            flat[j] = orig - eps
            f_minus = value_at()
            flat[j] = orig
            numeric[j] = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[pi].reshape(-1)
        if a.size:
            err = np.abs(a - numeric) / np.maximum(1.0, np.abs(a))
            worst = max(worst, float(err.max()))
    return worst
