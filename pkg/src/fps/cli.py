"""Command-line entry point.

Subcommands: preprocess, adapt, sweep, eval, demo, landscape, analyze.
Every run writes a run-metadata JSON (config echo, seed, generator
algorithm, format version) into its output directory so it can be
reproduced bit for bit. Figures are rendered next to every delimited
output unless --no-figures is given.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    class_distance_matrix,
    distribution_export,
    entropy_values,
    landscape_2d,
)
from .container import VERSION as FORMAT_VERSION
from .container import Manifest, read_container, write_container
from .demo import (
    default_demo_loss_config,
    default_demo_spec,
    default_demo_train_config,
    run_demo,
)
from .errors import ContainerFormatError, NumericalAbort, ValidationError
from .head import DecisionHead, accuracy, predict
from .losses import ALPHA_CANDIDATES, LossConfig, PoolingPerturbation, cr_values, pooled_views
from .preprocess import apply_stats, compute_sample_weights, fit_stats
from .rng import RNG_ALGORITHM, make_rng
from .selection import sweep_alpha
from .trainer import Histogram, TrainConfig, adapt
from . import report as rpt

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse maps usage problems to exit code 2; this artifact uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _add_io_flags(p):
    p.add_argument("--source", help="source-domain container path")
    p.add_argument("--target", help="target-domain container path")
    p.add_argument("--out-dir", help="output directory (created if missing)")
    p.add_argument("--config", help="JSON file with flag defaults; explicit flags win")


def _add_loss_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta0", type=float)
    p.add_argument("--lambda", dest="cr_weight", type=float)
    p.add_argument("--gamma-amplitude", type=float)
    p.add_argument("--weight-sharpness", type=float)
    p.add_argument("--entropy-sign", choices=["intent", "printed"])
    p.add_argument("--beta-form", choices=["printed", "interp"])


def _add_train_flags(p):
    p.add_argument("--max-lr", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--no-figures", action="store_true", default=None)


def _load_config(ns) -> dict:
    if getattr(ns, "config", None):
        with open(ns.config, encoding="utf-8") as fh:
            return json.load(fh)
    return {}


def _pick(ns, cfg: dict, name: str, default):
    value = getattr(ns, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _loss_config(ns, cfg: dict, base: LossConfig | None = None) -> LossConfig:
    base = base or LossConfig()
    return LossConfig(
        alpha=_pick(ns, cfg, "alpha", base.alpha),
        alpha0=_pick(ns, cfg, "alpha0", base.alpha0),
        beta=_pick(ns, cfg, "beta", base.beta),
        beta0=_pick(ns, cfg, "beta0", base.beta0),
        cr_weight=_pick(ns, cfg, "cr_weight", base.cr_weight),
        gamma_amplitude=_pick(ns, cfg, "gamma_amplitude", base.gamma_amplitude),
        weight_sharpness=_pick(ns, cfg, "weight_sharpness", base.weight_sharpness),
        entropy_sign=_pick(ns, cfg, "entropy_sign", base.entropy_sign),
        beta_form=_pick(ns, cfg, "beta_form", base.beta_form),
    )


def _train_config(ns, cfg: dict, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    return TrainConfig(
        max_lr=_pick(ns, cfg, "max_lr", base.max_lr),
        total_steps=_pick(ns, cfg, "steps", base.total_steps),
        warmup_steps=_pick(ns, cfg, "warmup", base.warmup_steps),
        batch_size=_pick(ns, cfg, "batch_size", base.batch_size),
        master_seed=_pick(ns, cfg, "seed", base.master_seed),
        log_every=_pick(ns, cfg, "log_every", base.log_every),
    )


def _out_dir(ns, cfg: dict) -> Path:
    out = _pick(ns, cfg, "out_dir", None)
    if out is None:
        raise ValidationError("--out-dir is required")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _metadata(out: Path, command: str, ns, cfg: dict, extra: dict | None = None) -> None:
    payload = {
        "command": command,
        "argv": sys.argv[1:],
        "package_version": __version__,
        "container_format_version": FORMAT_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "flags": {k: v for k, v in vars(ns).items() if v is not None and k != "func"},
        "config_file": cfg,
    }
    payload.update(extra or {})
    rpt.write_run_metadata(out / "run_metadata.json", payload)


def _load_pair(ns, cfg):
    src_path = _pick(ns, cfg, "source", None)
    tgt_path = _pick(ns, cfg, "target", None)
    if src_path is None or tgt_path is None:
        raise ValidationError("--source and --target are required")
    source, src_manifest = read_container(src_path)
    target, tgt_manifest = read_container(tgt_path)
    return source, src_manifest, target, tgt_manifest


# ------------------------------------------------------------ subcommands


def cmd_preprocess(ns) -> int:
    cfg = _load_config(ns)
    out = _out_dir(ns, cfg)
    source, src_manifest, target, tgt_manifest = _load_pair(ns, cfg)
    std_scale = _pick(ns, cfg, "std_scale", 2.5)
    apply_sqrt = bool(_pick(ns, cfg, "sqrt", False))
    if not apply_sqrt and src_manifest.feature_family == "relu_nonneg":
        apply_sqrt = True  # non-negative family defaults to the sqrt branch
    stats = fit_stats(source, target, s=std_scale, apply_sqrt=apply_sqrt)
    source_p = apply_stats(source, stats)
    target_p = apply_stats(target, stats)
    for featset, manifest, name in (
        (source_p, src_manifest, "source_processed.fpsb"),
        (target_p, tgt_manifest, "target_processed.fpsb"),
    ):
        manifest.extra = dict(manifest.extra)
        manifest.extra["preprocessed"] = True
        write_container(featset, manifest, out / name)
    stats_doc = {
        "mu": stats.mu.tolist(),
        "sigma": stats.sigma.tolist(),
        "s": stats.s,
        "sqrt_applied": stats.sqrt_applied,
        "fingerprint": stats.fingerprint(),
    }
    (out / "stats.json").write_text(json.dumps(stats_doc, indent=2) + "\n", encoding="utf-8")
    _metadata(out, "preprocess", ns, cfg, {"stats_fingerprint": stats.fingerprint()})
    print(f"wrote processed containers and stats to {out}")
    return 0


def cmd_adapt(ns) -> int:
    cfg = _load_config(ns)
    out = _out_dir(ns, cfg)
    source, _, target, _ = _load_pair(ns, cfg)
    loss_cfg = _loss_config(ns, cfg)
    train_cfg = _train_config(ns, cfg)
    report = adapt(source, target.without_labels(), loss_cfg, train_cfg)
    report.final_head.save(out / "head.json")
    rpt.write_trace_csv(report.loss_trace, out / "trace.csv")
    rpt.write_histogram_csv(report.se_histogram, out / "se_histogram.csv")
    if report.cr_histogram is not None:
        rpt.write_histogram_csv(report.cr_histogram, out / "cr_histogram.csv")
    target_acc = None
    if target.labels is not None:
        target_acc = accuracy(report.final_head, target, use_target_plane=True)
    summary = {
        "target_accuracy": target_acc,
        "d_intra_hat": report.d_intra_hat,
        "elapsed_seconds": report.elapsed,
        "loss_final": report.loss_trace[-1],
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if not _pick(ns, cfg, "no_figures", False):
        rpt.loss_curve_figure(report.loss_trace, out / "loss_curves.png")
        rpt.histogram_figure(report.se_histogram, out / "se_histogram.png", "prediction entropy")
        if report.cr_histogram is not None:
            rpt.histogram_figure(report.cr_histogram, out / "cr_histogram.png", "pooling discrepancy")
    _metadata(
        out,
        "adapt",
        ns,
        cfg,
        {
            "loss_config": asdict(loss_cfg),
            "train_config": asdict(train_cfg),
            "stats_fingerprints": {
                "source": source.stats_fingerprint,
                "target": target.stats_fingerprint,
            },
        },
    )
    if target_acc is not None:
        print(f"target accuracy: {target_acc:.4f}")
    print(f"intra-class distance: {report.d_intra_hat:.4f}")
    return 0


def cmd_sweep(ns) -> int:
    cfg = _load_config(ns)
    out = _out_dir(ns, cfg)
    source, _, target, _ = _load_pair(ns, cfg)
    loss_cfg = _loss_config(ns, cfg)
    train_cfg = _train_config(ns, cfg)
    raw = _pick(ns, cfg, "alphas", None)
    if raw is None:
        candidates = list(ALPHA_CANDIDATES)
    elif isinstance(raw, str):
        candidates = [float(x) for x in raw.split(",") if x.strip()]
    else:
        candidates = [float(x) for x in raw]
    rule = _pick(ns, cfg, "alpha0_rule", "fixed")
    selected, rows = sweep_alpha(source, target, candidates, loss_cfg, train_cfg, alpha0_rule=rule)
    rpt.write_sweep_csv(rows, out / "sweep.csv")
    if not _pick(ns, cfg, "no_figures", False):
        rpt.sweep_figure(rows, out / "sweep.png")
    _metadata(out, "sweep", ns, cfg, {"selected_alpha": selected, "candidates": candidates})
    for row in rows:
        marker = "*" if row.selected else " "
        acc = "" if row.target_accuracy is None else f" acc={row.target_accuracy:.4f}"
        print(f"{marker} alpha={row.alpha:.2f} d_intra={row.d_intra_hat:.4f}{acc}")
    print(f"selected alpha: {selected}")
    return 0


def cmd_eval(ns) -> int:
    cfg = _load_config(ns)
    head_path = _pick(ns, cfg, "head", None)
    data_path = _pick(ns, cfg, "data", None)
    if head_path is None or data_path is None:
        raise ValidationError("--head and --data are required")
    head = DecisionHead.load(head_path)
    featset, _ = read_container(data_path)
    use_target = not bool(_pick(ns, cfg, "source_plane", False))
    acc = accuracy(head, featset, use_target_plane=use_target)
    plane = "target" if use_target else "source"
    print(f"accuracy ({plane} plane): {acc:.4f}")
    out = _pick(ns, cfg, "out_dir", None)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(
            json.dumps({"accuracy": acc, "plane": plane}, indent=2) + "\n", encoding="utf-8"
        )
        _metadata(out, "eval", ns, cfg)
    return 0


def cmd_demo(ns) -> int:
    cfg = _load_config(ns)
    out = _out_dir(ns, cfg)
    seed = _pick(ns, cfg, "seed", 42)
    loss_cfg = _loss_config(ns, cfg, base=default_demo_loss_config())
    train_cfg = _train_config(ns, cfg, base=default_demo_train_config(seed))
    result = run_demo(
        spec=default_demo_spec(seed), loss_cfg=loss_cfg, train_cfg=train_cfg, seed=seed
    )
    print(result.table())
    with open(out / "demo.csv", "w", encoding="utf-8") as fh:
        fh.write("regime,target_accuracy\n")
        for row in result.rows:
            fh.write(f"{row['regime']},{row['target_acc']}\n")
    rpt.write_trace_csv(result.adapt_report.loss_trace, out / "trace.csv")
    if not _pick(ns, cfg, "no_figures", False):
        rpt.loss_curve_figure(result.adapt_report.loss_trace, out / "loss_curves.png")
        rpt.histogram_figure(
            result.adapt_report.se_histogram, out / "se_histogram.png", "prediction entropy"
        )
    _metadata(out, "demo", ns, cfg, {"accuracies": result.rows})
    return 0


def cmd_landscape(ns) -> int:
    cfg = _load_config(ns)
    out = _out_dir(ns, cfg)
    source, _, target, _ = _load_pair(ns, cfg)
    loss_cfg = _loss_config(ns, cfg)
    theta_steps = int(_pick(ns, cfg, "theta_steps", 72))
    b_min = float(_pick(ns, cfg, "b_min", -8.0))
    b_max = float(_pick(ns, cfg, "b_max", 8.0))
    b_steps = int(_pick(ns, cfg, "b_steps", 17))
    theta_grid = np.linspace(0.0, 2.0 * np.pi, theta_steps, endpoint=False)
    b_grid = np.linspace(b_min, b_max, b_steps)
    rows = landscape_2d(source, target, theta_grid, b_grid, loss_cfg)
    rpt.write_landscape_csv(rows, out / "landscape.csv")
    if not _pick(ns, cfg, "no_figures", False):
        rpt.landscape_figure(rows, out / "landscape_accuracy.png", "acc_combined")
        rpt.landscape_figure(rows, out / "landscape_joint_loss.png", "loss_joint")
    _metadata(out, "landscape", ns, cfg, {"theta_steps": theta_steps, "b_steps": b_steps})
    print(f"wrote {len(rows)} landscape cells to {out}")
    return 0


def cmd_analyze(ns) -> int:
    cfg = _load_config(ns)
    out = _out_dir(ns, cfg)
    source, _, target, _ = _load_pair(ns, cfg)
    bins = int(_pick(ns, cfg, "bins", 50))
    kde = bool(_pick(ns, cfg, "kde", False))
    no_figs = _pick(ns, cfg, "no_figures", False)

    if source.labels is not None and target.labels is not None:
        cross = class_distance_matrix(target, source)
        within = class_distance_matrix(target, target)
        rpt.write_matrix_csv(cross, out / "distance_target_source.csv")
        rpt.write_matrix_csv(within, out / "distance_target_target.csv")
        if not no_figs:
            rpt.matrix_figure(cross, out / "distance_target_source.png", "target vs source")
            rpt.matrix_figure(within, out / "distance_target_target.png", "target vs target")

    head_path = _pick(ns, cfg, "head", None)
    head = (
        DecisionHead.load(head_path)
        if head_path
        else DecisionHead.zeros(target.dim, max(target.class_count(), source.class_count(), 2))
    )
    se = entropy_values(head, target, use_target_plane=True)
    se_export = distribution_export(se, bins=bins, kde=kde)
    rpt.write_distribution_csv(se_export, out / "se_distribution.csv")
    if not no_figs:
        rpt.distribution_figure(se_export, out / "se_distribution.png", "prediction entropy")

    if target.patch_features is not None:
        perturb = PoolingPerturbation(mode=_pick(ns, cfg, "pooling_mode", "uniform"))
        rng = make_rng(int(_pick(ns, cfg, "seed", 0)))
        va, vb = pooled_views(target.patch_features.astype(np.float64), perturb, rng)
        for tag, normalized in (("raw", False), ("normalized", True)):
            values = cr_values(head, va, vb, normalized=normalized)
            export = distribution_export(values, bins=bins, kde=kde)
            rpt.write_distribution_csv(export, out / f"cr_distribution_{tag}.csv")
            if not no_figs:
                rpt.distribution_figure(
                    export, out / f"cr_distribution_{tag}.png", f"pooling discrepancy ({tag})"
                )
    _metadata(out, "analyze", ns, cfg)
    print(f"wrote analysis outputs to {out}")
    return 0


# ------------------------------------------------------------------ main


def build_parser() -> _Parser:
    parser = _Parser(prog="fps", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fps {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("preprocess", help="fit and apply standardization stats")
    _add_io_flags(p)
    p.add_argument("--std-scale", type=float)
    p.add_argument("--sqrt", action="store_true", default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("adapt", help="run adaptation, write head and report")
    _add_io_flags(p)
    _add_loss_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("sweep", help="alpha grid with label-free selection")
    _add_io_flags(p)
    _add_loss_flags(p)
    _add_train_flags(p)
    p.add_argument("--alphas", help="comma-separated candidate list")
    p.add_argument("--alpha0-rule", choices=["fixed", "half"])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score a stored head on a labeled container")
    p.add_argument("--head")
    p.add_argument("--data")
    p.add_argument("--source-plane", action="store_true", default=None)
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("demo", help="generate shifted data, compare three regimes")
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    _add_loss_flags(p)
    p.add_argument("--max-lr", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--no-figures", action="store_true", default=None)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("landscape", help="2-D plane-parameter grid CSV")
    _add_io_flags(p)
    _add_loss_flags(p)
    p.add_argument("--theta-steps", type=int)
    p.add_argument("--b-min", type=float)
    p.add_argument("--b-max", type=float)
    p.add_argument("--b-steps", type=int)
    p.add_argument("--no-figures", action="store_true", default=None)
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("analyze", help="distance matrices and distributions")
    _add_io_flags(p)
    p.add_argument("--head")
    p.add_argument("--bins", type=int)
    p.add_argument("--kde", action="store_true", default=None)
    p.add_argument("--pooling-mode", choices=["uniform", "squared_uniform"])
    p.add_argument("--seed", type=int)
    p.add_argument("--no-figures", action="store_true", default=None)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns)
    except (ContainerFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
