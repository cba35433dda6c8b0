"""Command line front end.

One subcommand per invocation; every artifact lands under --out and carries
the config fingerprint so any number can be rerun exactly.

Exit codes: 0 ok, 2 bad config or flags, 3 unreadable or invalid data file,
4 numeric failure. argparse itself exits 2 on unknown flags, matching the
config-error class.

Only standard-library imports may appear at module scope: STRGCL_THREADS
must be exported to the BLAS thread knobs before numpy first loads, so all
numeric imports happen inside the handlers after _cap_threads() ran.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import (
    ConfigError,
    FormatError,
    ProtocolError,
    SgclError,
)

_PROBE_SPLITS = 20
_KMEANS_SEEDS = 10
_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _cap_threads() -> None:
    cap = os.environ.get("STRGCL_THREADS")
    if cap is None:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise ConfigError(f"STRGCL_THREADS must be a positive integer, got {cap!r}")
    for var in _THREAD_VARS:
        os.environ[var] = cap


# ---------------------------------------------------------------------------
# plumbing


def _load_config(args) -> "TrainConfig":
    from .trainer import TrainConfig

    try:
        cfg = TrainConfig.from_json_file(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg.validate()
    return cfg


def _load_data(path: str) -> "Graph":
    from .graph import load_graph

    try:
        return load_graph(path)
    except OSError as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from exc


def _prepare_out(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _write_text(path: str, text: str) -> None:
    # temp-and-rename so a crash never leaves a truncated artifact behind
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _get_params(args, cfg, g):
    """Load a checkpoint when one was passed, otherwise train from scratch."""
    from .model import load_params
    from .trainer import train

    if getattr(args, "checkpoint", None):
        try:
            return load_params(args.checkpoint), None
        except OSError as exc:
            raise FormatError(
                f"cannot read checkpoint {args.checkpoint}: {exc}") from exc
    params, log = train(g, cfg)
    return params, log


def _float_cell(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_train(args) -> int:
    from .model import save_params
    from .trainer import train

    cfg = _load_config(args)
    g = _load_data(args.data)
    out = _prepare_out(args.out)
    fp = cfg.fingerprint()

    params, log = train(g, cfg)

    lines = [json.dumps({"config_fingerprint": fp, "dataset": g.name,
                         "num_epochs": cfg.num_epochs})]
    lines += [json.dumps(e.to_json_dict()) for e in log]
    _write_text(os.path.join(out, "train_log.jsonl"), "\n".join(lines) + "\n")

    ckpt = os.path.join(out, "checkpoint.sgc1")
    tmp = ckpt + ".tmp"
    save_params(params, tmp, extra={"config_fingerprint": fp})
    os.replace(tmp, ckpt)

    _write_json(os.path.join(out, "run.json"), {
        "config_fingerprint": fp,
        "config": json.loads(cfg.canonical_json()),
        "dataset": g.name,
        "nodes": g.n,
        "final_total_loss": log[-1].total if log else None,
    })
    print(f"trained {cfg.num_epochs} epochs on {g.name or args.data}; "
          f"artifacts in {out}")
    return 0


def _cmd_embed(args) -> int:
    import numpy as np

    from .trainer import embed

    cfg = _load_config(args)
    g = _load_data(args.data)
    out = _prepare_out(args.out)
    params, _ = _get_params(args, cfg, g)

    h = embed(g, params)
    path = os.path.join(out, "embeddings.npz")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, embeddings=h, config_fingerprint=cfg.fingerprint())
    os.replace(tmp, path)
    print(f"wrote {h.shape[0]}x{h.shape[1]} embedding matrix to {path}")
    return 0


def _cmd_eval_classify(args) -> int:
    from .evaluation import EvalReport, linear_probe
    from .trainer import embed

    cfg = _load_config(args)
    g = _load_data(args.data)
    out = _prepare_out(args.out)
    params, _ = _get_params(args, cfg, g)

    h = embed(g, params)
    mean, std, detail = linear_probe(h, g.labels, g.num_classes,
                                     probe_seeds=_PROBE_SPLITS)
    report = EvalReport(accuracy_mean=mean, accuracy_std=std,
                        per_seed=detail, config_fingerprint=cfg.fingerprint())
    report.validate()
    _write_json(os.path.join(out, "classify_report.json"), report.to_json_dict())
    print(f"linear probe accuracy {mean:.4f} +- {std:.4f} "
          f"over {_PROBE_SPLITS} splits")
    return 0


def _cmd_eval_cluster(args) -> int:
    from .evaluation import EvalReport, clustering_metrics, kmeans_cluster
    from .trainer import embed

    cfg = _load_config(args)
    g = _load_data(args.data)
    out = _prepare_out(args.out)
    if g.labels is None:
        raise ProtocolError("clustering evaluation needs ground-truth labels")
    params, _ = _get_params(args, cfg, g)

    h = embed(g, params)
    assign, inertia = kmeans_cluster(h, k=g.num_classes, seeds=_KMEANS_SEEDS)
    mask = g.labels >= 0
    nmi, ari = clustering_metrics(assign[mask], g.labels[mask])
    report = EvalReport(nmi=nmi, ari=ari, config_fingerprint=cfg.fingerprint())
    report.validate()
    payload = report.to_json_dict()
    payload["inertia"] = inertia
    payload["k"] = g.num_classes
    _write_json(os.path.join(out, "cluster_report.json"), payload)
    print(f"kmeans k={g.num_classes}: nmi {nmi:.4f}, ari {ari:.4f}")
    return 0


def _cmd_analyze_errors(args) -> int:
    from .evaluation import error_profile

    cfg = _load_config(args)
    g = _load_data(args.data)
    out = _prepare_out(args.out)

    profile = error_profile(g, cfg, runs=args.runs, threshold=args.threshold,
                            jobs=args.jobs)
    _write_json(os.path.join(out, "error_profile.json"), profile.to_json_dict())
    csv_text = (f"# config_fingerprint={profile.config_fingerprint}\n"
                + profile.histogram_csv())
    _write_text(os.path.join(out, "error_histogram.csv"), csv_text)
    print(f"{profile.total} nodes misclassified in >= {args.threshold} "
          f"of {args.runs} runs")
    return 0


def _cmd_rules_dump(args) -> int:
    from .rules import compute_rules, lgtc_profile, ntsc_profile

    cfg = _load_config(args)
    g = _load_data(args.data)
    out = _prepare_out(args.out)

    degree, d_sum, w = ntsc_profile(g)
    _, _, x_reduced = compute_rules(g, cfg.pca_dim)
    as_, gs, diff, s = lgtc_profile(x_reduced, g)

    rows = [f"# config_fingerprint={cfg.fingerprint()}",
            "node_id,degree,d_sum,w,AS,GS,Diff,s"]
    for i in range(g.n):
        rows.append(",".join([str(i)] + [_float_cell(v) for v in (
            degree[i], d_sum[i], w[i], as_[i], gs[i], diff[i], s[i])]))
    _write_text(os.path.join(out, "rules.csv"), "\n".join(rows) + "\n")
    print(f"wrote per-node rule profile for {g.n} nodes to {out}/rules.csv")
    return 0


def _cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    return 0 if run_selfcheck(emit=print) else 4


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgcl",
        description="Rule-guided graph contrastive learning engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", required=True, help="training config JSON")
        sp.add_argument("--data", required=True, help="dataset .sgr1 file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        if checkpoint:
            sp.add_argument("--checkpoint", default=None,
                            help="reuse a trained checkpoint instead of training")

    common(sub.add_parser("train", help="train and write checkpoint + loss log"))
    common(sub.add_parser("embed", help="write the embedding matrix"),
           checkpoint=True)
    common(sub.add_parser("eval-classify", help="linear probe accuracy report"),
           checkpoint=True)
    common(sub.add_parser("eval-cluster", help="k-means NMI/ARI report"),
           checkpoint=True)

    errors_sp = sub.add_parser(
        "analyze-errors", help="misclassification histogram over repeated runs")
    common(errors_sp)
    errors_sp.add_argument("--runs", type=int, default=20,
                           help="independent trainings (default 20)")
    errors_sp.add_argument("--threshold", type=int, default=15,
                           help="lowest histogram bucket (default 15)")
    errors_sp.add_argument("--jobs", type=int, default=1,
                           help="parallel training processes (default 1)")

    common(sub.add_parser("rules-dump", help="per-node structural rule CSV"))
    sub.add_parser("selfcheck", help="run the property suite")
    return parser


_HANDLERS = {
    "train": _cmd_train,
    "embed": _cmd_embed,
    "eval-classify": _cmd_eval_classify,
    "eval-cluster": _cmd_eval_cluster,
    "analyze-errors": _cmd_analyze_errors,
    "rules-dump": _cmd_rules_dump,
    "selfcheck": _cmd_selfcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _cap_threads()
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SgclError as exc:
        # shape, numeric, contract, degenerate-batch: all numeric failures
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
