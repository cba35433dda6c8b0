"""Downstream protocols run on frozen embeddings: linear-probe
classification, k-means clustering scored by NMI/ARI, and the repeated-run
misclassification profile.

All randomness is drawn from explicit per-call seeds so every number here is
reproducible bit-for-bit from (embeddings, labels, seed list).
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericError, ProtocolError
from .graph import Graph
from .trainer import TrainConfig, embed, train

_PROBE_L2_GRID = (1e-2, 1e-3, 1e-4)
_PROBE_GRAD_TOL = 1e-6
_PROBE_MAX_ITER = 5000


@dataclass
class EvalReport:
    """Classification and/or clustering numbers for one embedding matrix."""

    accuracy_mean: float | None = None
    accuracy_std: float | None = None
    nmi: float | None = None
    ari: float | None = None
    per_seed: list = field(default_factory=list)
    config_fingerprint: str = ""

    def validate(self) -> None:
        if self.accuracy_mean is not None and not 0.0 <= self.accuracy_mean <= 1.0:
            raise NumericError(f"accuracy {self.accuracy_mean} outside [0, 1]")
        if self.nmi is not None and not -1e-12 <= self.nmi <= 1.0 + 1e-12:
            raise NumericError(f"nmi {self.nmi} outside [0, 1]")
        if self.ari is not None and not -1.0 - 1e-12 <= self.ari <= 1.0 + 1e-12:
            raise NumericError(f"ari {self.ari} outside [-1, 1]")

    def to_json_dict(self) -> dict:
        return {
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "nmi": self.nmi,
            "ari": self.ari,
            "per_seed": self.per_seed,
            "config_fingerprint": self.config_fingerprint,
        }


@dataclass
class ErrorProfile:
    """Per-node misclassification counts over repeated independent runs."""

    runs: int
    threshold: int
    counts: np.ndarray
    histogram: dict
    total: int
    run_seeds: list
    split_seeds: list
    config_fingerprint: str = ""

    def validate(self) -> None:
        if self.counts.max(initial=0) > self.runs:
            raise NumericError("per-node count exceeds number of runs")
        if self.total != sum(self.histogram.values()):
            raise NumericError("histogram buckets do not sum to total")

    def to_json_dict(self) -> dict:
        return {
            "runs": self.runs,
            "threshold": self.threshold,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "total": self.total,
            "run_seeds": self.run_seeds,
            "split_seeds": self.split_seeds,
            "counts": self.counts.tolist(),
            "config_fingerprint": self.config_fingerprint,
        }

    def histogram_csv(self) -> str:
        lines = ["count,nodes"]
        lines += [f"{k},{self.histogram[k]}" for k in sorted(self.histogram)]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# linear probe


def _softmax_fit(x: np.ndarray, y: np.ndarray, num_classes: int,
                 l2: float) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial logistic regression by full-batch gradient descent with
    backtracking line search, run to gradient norm below 1e-6. L2 penalty on
    the weights only; the intercept is free."""
    n, d = x.shape
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0

    def loss_and_grad(w, b):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        denom = expl.sum(axis=1, keepdims=True)
        p = expl / denom
        nll = -(np.log(p[np.arange(n), y] + 1e-300)).mean()
        f = nll + 0.5 * l2 * float((w * w).sum())
        diff = (p - onehot) / n
        gw = x.T @ diff + l2 * w
        gb = diff.sum(axis=0)
        return f, gw, gb

    f, gw, gb = loss_and_grad(w, b)
    step = 1.0
    for _ in range(_PROBE_MAX_ITER):
        gsq = float((gw * gw).sum() + (gb * gb).sum())
        if np.sqrt(gsq) < _PROBE_GRAD_TOL:
            break
        step = min(step * 2.0, 1e4)
        while True:
            w2 = w - step * gw
            b2 = b - step * gb
            f2, gw2, gb2 = loss_and_grad(w2, b2)
            if f2 <= f - 1e-4 * step * gsq or step < 1e-16:
                break
            step *= 0.5
        w, b, f, gw, gb = w2, b2, f2, gw2, gb2
    return w, b


def _probe_once(h: np.ndarray, labels: np.ndarray, num_classes: int,
                train_frac: float, seed: int,
                l2_grid=_PROBE_L2_GRID) -> tuple[float, np.ndarray, np.ndarray]:
    """One stratification-free split: sweep the L2 grid on a 10% validation
    slice of the train rows, retrain on the full train rows with the winner,
    score the held-out rows. Returns (accuracy, test_idx, correct_mask)."""
    rng = np.random.default_rng(seed)
    n = h.shape[0]
    perm = rng.permutation(n)
    n_train = max(1, int(round(train_frac * n)))
    if n_train >= n:
        raise ConfigError(f"train_frac {train_frac} leaves no test rows for n={n}")
    train_idx, test_idx = perm[:n_train], perm[n_train:]

    n_val = max(1, int(round(0.1 * n_train)))
    fit_idx, val_idx = train_idx[n_val:], train_idx[:n_val]
    best_l2, best_val = None, -1.0
    if len(fit_idx) == 0:
        best_l2 = l2_grid[-1]
    else:
        for l2 in l2_grid:
            w, b = _softmax_fit(h[fit_idx], labels[fit_idx], num_classes, l2)
            pred = (h[val_idx] @ w + b).argmax(axis=1)
            val_acc = float((pred == labels[val_idx]).mean())
            if val_acc > best_val:
                best_val, best_l2 = val_acc, l2

    w, b = _softmax_fit(h[train_idx], labels[train_idx], num_classes, best_l2)
    pred = (h[test_idx] @ w + b).argmax(axis=1)
    correct = pred == labels[test_idx]
    return float(correct.mean()), test_idx, correct


def _labeled_view(h: np.ndarray, labels: np.ndarray | None,
                  num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    if labels is None:
        raise ProtocolError("labels are required for supervised evaluation")
    mask = labels >= 0
    if not mask.any():
        raise ProtocolError("all labels are missing")
    if num_classes < 2:
        raise ProtocolError(f"need at least 2 classes, got {num_classes}")
    return np.asarray(h, dtype=np.float64)[mask], labels[mask].astype(np.int64)


def linear_probe(h: np.ndarray, labels: np.ndarray | None, num_classes: int,
                 train_frac: float = 0.10,
                 probe_seeds: int | list = 20) -> tuple[float, float, list]:
    """Mean and standard deviation of test accuracy over independent random
    splits; also returns the per-seed detail list."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac {train_frac} outside (0, 1)")
    hl, yl = _labeled_view(h, labels, num_classes)
    seeds = list(range(probe_seeds)) if isinstance(probe_seeds, int) else list(probe_seeds)
    if not seeds:
        raise ConfigError("at least one probe seed is required")
    detail = []
    for s in seeds:
        acc, _, _ = _probe_once(hl, yl, num_classes, train_frac, s)
        detail.append({"seed": int(s), "accuracy": acc})
    accs = np.array([d["accuracy"] for d in detail])
    return float(accs.mean()), float(accs.std()), detail


# ---------------------------------------------------------------------------
# clustering


def _kmeans_pp_init(h: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = h.shape[0]
    centers = np.empty((k, h.shape[1]))
    first = int(rng.integers(n))
    centers[0] = h[first]
    d2 = ((h - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # remaining mass is zero (duplicate points): any choice is exact
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = h[idx]
        d2 = np.minimum(d2, ((h - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(h: np.ndarray, centers: np.ndarray,
           max_iter: int = 300) -> tuple[np.ndarray, float, list]:
    """Lloyd iterations until assignments stabilize; returns the assignment,
    final inertia, and the per-iteration inertia trace (non-increasing)."""
    k = centers.shape[0]
    assign = np.full(h.shape[0], -1)
    history = []
    for _ in range(max_iter):
        d2 = ((h[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(h.shape[0]), new_assign].sum())
        history.append(inertia)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = h[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            # empty cluster keeps its center; it can re-acquire points later
    return assign, history[-1], history


def kmeans_cluster(h: np.ndarray, k: int,
                   seeds: int | list = 10) -> tuple[np.ndarray, float]:
    """Best-inertia k-means over several k-means++ seedings; deterministic
    per seed list."""
    h = np.asarray(h, dtype=np.float64)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > h.shape[0]:
        raise ConfigError(f"k={k} exceeds number of points {h.shape[0]}")
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    if not seed_list:
        raise ConfigError("at least one seed is required")
    best = None
    for s in seed_list:
        centers = _kmeans_pp_init(h, k, np.random.default_rng(s))
        assign, inertia, _ = _lloyd(h, centers)
        if best is None or inertia < best[1]:
            best = (assign, inertia)
    return best


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def clustering_metrics(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """(NMI with arithmetic-mean normalization, adjusted Rand index)."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ProtocolError(f"labelings differ in length: {a.shape} vs {b.shape}")
    n = len(a)
    if n == 0:
        raise ProtocolError("empty labelings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    cont = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(cont, (ai, bi), 1)
    row = cont.sum(axis=1)
    col = cont.sum(axis=0)

    nz = cont > 0
    nij = cont[nz].astype(np.float64)
    outer = (row[:, None] * col[None, :])[nz].astype(np.float64)
    mi = float((nij / n * (np.log(nij * n) - np.log(outer))).sum())
    ha, hb = _entropy(row, n), _entropy(col, n)
    denom = 0.5 * (ha + hb)
    nmi = 1.0 if denom == 0.0 else mi / denom

    def comb2(v):
        return float((v.astype(np.float64) * (v - 1) / 2).sum())

    sum_ij = comb2(cont.ravel())
    sum_a, sum_b = comb2(row), comb2(col)
    total = n * (n - 1) / 2.0
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    # zero spread means the two partitions have identical pair structure
    ari = 1.0 if max_index == expected else (sum_ij - expected) / (max_index - expected)
    return nmi, ari


# ---------------------------------------------------------------------------
# repeated-run misclassification profile


def _error_profile_run(args) -> tuple[int, np.ndarray]:
    g, cfg, run_index, train_frac, include_rules = args
    run_cfg = replace(cfg, seed=cfg.seed + run_index)
    params, _ = train(g, run_cfg, include_rules=include_rules)
    h = embed(g, params)
    hl, yl = _labeled_view(h, g.labels, g.num_classes)
    _, test_idx, correct = _probe_once(hl, yl, g.num_classes, train_frac,
                                       seed=run_index)
    labeled_nodes = np.flatnonzero(g.labels >= 0)
    wrong = np.zeros(g.n, dtype=np.int64)
    wrong[labeled_nodes[test_idx[~correct]]] = 1
    return run_index, wrong


def error_profile(g: Graph, cfg: TrainConfig, runs: int = 20,
                  threshold: int = 15, train_frac: float = 0.10,
                  include_rules: bool | None = None,
                  jobs: int = 1) -> ErrorProfile:
    """Train `runs` models on distinct seeds, probe each once on a freshly
    drawn split, and histogram how often each node lands wrong at or above
    the threshold."""
    if g.labels is None:
        raise ProtocolError("labels are required for the error profile")
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    if not 0 <= threshold <= runs:
        raise ConfigError(f"threshold {threshold} outside [0, runs={runs}]")
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")

    work = [(g, cfg, r, train_frac, include_rules) for r in range(runs)]
    counts = np.zeros(g.n, dtype=np.int64)
    if jobs == 1:
        results = map(_error_profile_run, work)
    else:
        pool = concurrent.futures.ProcessPoolExecutor(max_workers=jobs)
        try:
            results = list(pool.map(_error_profile_run, work))
        finally:
            pool.shutdown()
    for _, wrong in results:
        counts += wrong

    histogram = {c: int((counts == c).sum()) for c in range(threshold, runs + 1)}
    profile = ErrorProfile(
        runs=runs,
        threshold=threshold,
        counts=counts,
        histogram=histogram,
        total=sum(histogram.values()),
        run_seeds=[cfg.seed + r for r in range(runs)],
        split_seeds=list(range(runs)),
        config_fingerprint=cfg.fingerprint(),
    )
    profile.validate()
    return profile
