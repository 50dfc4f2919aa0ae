"""Command-line front end: configuration, checkpointing, and report emission.

Subcommands: synth, train, segment, evaluate, ablate, roc, histograms.
Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure.  Configuration comes from an optional ``key = value`` file plus
repeatable ``--set key=value`` overrides; every run writes the resolved
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import (
    ClassifierTrainConfig,
    confidence_score,
    load_classifier,
    save_classifier,
)
from .data import generate_synthetic, load_dataset, save_dataset
from .errors import ConfigError, FormatError, NumericalError, ValidationError
from .evt import load_evt_models, save_evt_models
from .embedding import (
    EmbeddingTrainConfig,
    load_embedding,
    load_prototypes,
    save_embedding,
    save_prototypes,
)
from .evaluation import (
    MODES,
    PipelineStages,
    ablation_table,
    emit_histograms,
    evaluate_mode,
    fit_stages,
    report_kv_lines,
    report_table,
    roc_curve,
)
from .segmentation import DomainThresholds, segment_all


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


# key -> (type converter, default)
CONFIG_KEYS = {
    "dataset": (str, ""),
    "output_dir": (str, "out"),
    "seed": (int, 0),
    "mode": (str, "baseline+DS+CS"),
    "embedding_objective": (str, "prototype"),
    "gamma": (float, 1.5),
    "tail_size": (int, 20),
    "evt_normalize": (_parse_bool, False),
    "workers": (int, 1),
    "bins": (int, 20),
    "clf_learning_rate": (float, 1e-3),
    "clf_momentum": (float, 0.9),
    "clf_epochs": (int, 100),
    "clf_batch_size": (int, 64),
    "temperature": (float, 2.0),
    "beta_in": (float, 0.9),
    "beta_out": (float, 0.5),
    "alpha_out": (float, 0.9),
    "alpha_in": (float, 0.5),
    "top_k": (int, 3),
    "hidden_dim": (int, 1600),
    "reg_lambda": (float, 1e-4),
    "embed_learning_rate": (float, 1e-4),
    "proto_learning_rate": (float, 1e-3),
    "rounds": (int, 10),
    "proto_epochs": (int, 5),
    "embed_epochs": (int, 20),
    "embed_batch_size": (int, 64),
}


@dataclass
class PipelineConfig:
    dataset: str
    output_dir: str
    seed: int
    mode: str
    embedding_objective: str
    gamma: float
    tail_size: int
    evt_normalize: bool
    workers: int
    bins: int
    classifier: ClassifierTrainConfig
    thresholds: DomainThresholds
    embedding: EmbeddingTrainConfig
    raw: dict = field(repr=False, default_factory=dict)


def _read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in text.split("=", 1))
            values[key] = value
    return values


def parse_config(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Resolve file values, overrides, and defaults into a validated config.

    Overrides beat file values; defaults fill the rest.  Unknown keys, type
    mismatches, and invariant violations are rejected with the rule named.
    """
    raw_text = _read_config_file(path) if path is not None else {}
    raw_text.update(overrides or {})

    resolved: dict = {}
    for key, value in raw_text.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown configuration key '{key}'")
        conv = CONFIG_KEYS[key][0]
        try:
            resolved[key] = conv(value) if isinstance(value, str) else value
        except ValueError:
            raise ConfigError(f"bad value for '{key}': {value!r}") from None
    for key, (_, default) in CONFIG_KEYS.items():
        resolved.setdefault(key, default)

    if resolved["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if resolved["embedding_objective"] not in ("prototype", "simple"):
        raise ConfigError("embedding_objective must be 'prototype' or 'simple'")
    if resolved["gamma"] < 1:
        raise ConfigError("gamma must be >= 1")
    if resolved["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    if resolved["bins"] < 1:
        raise ConfigError("bins must be >= 1")

    try:
        classifier = ClassifierTrainConfig(
            learning_rate=resolved["clf_learning_rate"],
            momentum=resolved["clf_momentum"],
            epochs=resolved["clf_epochs"],
            batch_size=resolved["clf_batch_size"],
            temperature=resolved["temperature"],
            seed=resolved["seed"],
        )
        thresholds = DomainThresholds(
            beta_in=resolved["beta_in"],
            beta_out=resolved["beta_out"],
            alpha_out=resolved["alpha_out"],
            alpha_in=resolved["alpha_in"],
            top_k=resolved["top_k"],
        )
        embedding = EmbeddingTrainConfig(
            hidden_dim=resolved["hidden_dim"],
            reg_lambda=resolved["reg_lambda"],
            learning_rate=resolved["embed_learning_rate"],
            proto_learning_rate=resolved["proto_learning_rate"],
            rounds=resolved["rounds"],
            proto_epochs=resolved["proto_epochs"],
            embed_epochs=resolved["embed_epochs"],
            batch_size=resolved["embed_batch_size"],
            seed=resolved["seed"] + 1,
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None

    return PipelineConfig(
        dataset=resolved["dataset"],
        output_dir=resolved["output_dir"],
        seed=resolved["seed"],
        mode=resolved["mode"],
        embedding_objective=resolved["embedding_objective"],
        gamma=resolved["gamma"],
        tail_size=resolved["tail_size"],
        evt_normalize=resolved["evt_normalize"],
        workers=resolved["workers"],
        bins=resolved["bins"],
        classifier=classifier,
        thresholds=thresholds,
        embedding=embedding,
        raw=resolved,
    )


def _overrides_from_args(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.dataset is not None:
        overrides["dataset"] = args.dataset
    if args.out_dir is not None:
        overrides["output_dir"] = args.out_dir
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    return overrides


def _load_cfg(args) -> PipelineConfig:
    return parse_config(args.config, _overrides_from_args(args))


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_effective_config(cfg: PipelineConfig, out: Path) -> None:
    lines = [f"{key} = {cfg.raw[key]}" for key in sorted(cfg.raw)]
    (out / "effective_config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_ds(cfg: PipelineConfig):
    if not cfg.dataset:
        raise ConfigError("no dataset path configured")
    return load_dataset(cfg.dataset)


def _stages(args, cfg: PipelineConfig, ds,
            need=("classifier", "evt", "embedding")) -> PipelineStages:
    """Load checkpointed stages if requested, otherwise train them now."""
    ckpt = getattr(args, "checkpoints", None)
    if ckpt is None:
        return fit_stages(ds, cfg)
    root = Path(ckpt)
    clf = load_classifier(root / "classifier.gzcl", ds.seen_classes,
                          cfg.classifier.temperature)
    models = load_evt_models(root / "evt.gzev") if "evt" in need else {}
    if "embedding" in need:
        protos = load_prototypes(root / "prototypes.gzpr")
        net = load_embedding(root / "embedding.gzem")
    else:
        protos = net = None
    return PipelineStages(clf, models, protos, net)


def cmd_synth(args) -> int:
    ds = generate_synthetic(args.n_seen, args.n_unseen, args.dim, args.sem_dim,
                            args.per_class, args.spread, args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: N={ds.num_instances} d={ds.feature_dim} "
          f"C={ds.num_classes} a={ds.semantic_dim}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    ds = _load_ds(cfg)
    stages = fit_stages(ds, cfg)
    out = _out_dir(cfg)
    save_classifier(stages.classifier, out / "classifier.gzcl")
    save_evt_models(stages.evt_models, out / "evt.gzev")
    save_prototypes(stages.prototypes, out / "prototypes.gzpr")
    save_embedding(stages.net, out / "embedding.gzem")
    _write_effective_config(cfg, out)
    print(f"checkpoints written to {out}")
    return 0


def cmd_segment(args) -> int:
    cfg = _load_cfg(args)
    ds = _load_ds(cfg)
    stages = _stages(args, cfg, ds, need=("classifier", "evt"))
    result = segment_all(ds, stages.classifier, stages.evt_models, cfg.thresholds,
                         cfg.evt_normalize, cfg.workers)
    out = _out_dir(cfg)
    lines = ["instance_index,true_origin,assigned_domain,top_confidence,top_tail_prob"]
    for i in range(result.indices.size):
        lines.append(
            f"{result.indices[i]},{result.origins[i]},{result.domains[i].value},"
            f"{result.confidences[i]!r},{result.tail_probs[i]!r}"
        )
    (out / "segmentation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_effective_config(cfg, out)
    for (origin, domain), count in sorted(result.counts.items()):
        print(f"{origin:>6} -> {domain.value:<9} {count}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    ds = _load_ds(cfg)
    stages = _stages(args, cfg, ds)
    report, _ = evaluate_mode(ds, cfg, stages, cfg.mode)
    out = _out_dir(cfg)
    (out / "report.txt").write_text(report_table(report), encoding="utf-8")
    (out / "report.kv").write_text("\n".join(report_kv_lines(report)) + "\n",
                                   encoding="utf-8")
    _write_effective_config(cfg, out)
    print(report_table(report), end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    ds = _load_ds(cfg)
    stages = _stages(args, cfg, ds)
    reports = {mode: evaluate_mode(ds, cfg, stages, mode)[0] for mode in MODES}
    out = _out_dir(cfg)
    (out / "ablation.txt").write_text(ablation_table(reports), encoding="utf-8")
    kv = []
    for mode in MODES:
        prefix = mode.replace("+", "_")
        r = reports[mode]
        kv += [f"{prefix}.acc_ts = {r.acc_ts!r}",
               f"{prefix}.acc_tr = {r.acc_tr!r}",
               f"{prefix}.h = {r.harmonic!r}"]
    (out / "ablation.kv").write_text("\n".join(kv) + "\n", encoding="utf-8")
    _write_effective_config(cfg, out)
    print(ablation_table(reports), end="")
    return 0


def cmd_roc(args) -> int:
    cfg = _load_cfg(args)
    ds = _load_ds(cfg)
    stages = _stages(args, cfg, ds, need=("classifier",))
    indices = np.concatenate([ds.split.test_seen_idx, ds.split.test_unseen_idx])
    flags = np.concatenate([
        np.zeros(ds.split.test_seen_idx.size, dtype=bool),
        np.ones(ds.split.test_unseen_idx.size, dtype=bool),
    ])
    scores = np.array([
        1.0 - confidence_score(stages.classifier, ds.features[i].astype(np.float64))
        for i in indices
    ])
    curve = roc_curve(scores, flags)
    out = _out_dir(cfg)
    lines = ["fpr,tpr,threshold"]
    for i in range(curve.fpr.size):
        lines.append(f"{curve.fpr[i]!r},{curve.tpr[i]!r},{curve.thresholds[i]!r}")
    (out / "roc.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_effective_config(cfg, out)
    print(f"auc = {curve.auc!r}")
    return 0


def cmd_histograms(args) -> int:
    cfg = _load_cfg(args)
    ds = _load_ds(cfg)
    stages = _stages(args, cfg, ds)
    _, artifacts = evaluate_mode(ds, cfg, stages, cfg.mode)
    tables = emit_histograms(artifacts, cfg.bins)
    out = _out_dir(cfg)
    (out / "confidence_hist.csv").write_text(tables["confidence"], encoding="utf-8")
    (out / "distance_hist.csv").write_text(tables["distance"], encoding="utf-8")
    _write_effective_config(cfg, out)
    print(f"histograms written to {out}")
    return 0


def _add_common(sub) -> None:
    sub.add_argument("--config", help="key = value configuration file")
    sub.add_argument("--dataset", help="GZB dataset path (overrides config)")
    sub.add_argument("--out-dir", help="output directory (overrides config)")
    sub.add_argument("--seed", type=int, help="global seed (overrides config)")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any configuration key")
    sub.add_argument("--checkpoints", metavar="DIR",
                     help="reuse stage checkpoints from a 'train' run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gzseg",
        description="Generalized zero-shot recognition with domain segmentation",
    )
    sub = parser.add_subparsers(dest="command")

    synth = sub.add_parser("synth", help="generate a synthetic GZB dataset")
    synth.add_argument("out", help="output GZB path")
    synth.add_argument("--n-seen", type=int, default=10)
    synth.add_argument("--n-unseen", type=int, default=5)
    synth.add_argument("--dim", type=int, default=32)
    synth.add_argument("--sem-dim", type=int, default=8)
    synth.add_argument("--per-class", type=int, default=100)
    synth.add_argument("--spread", type=float, default=0.25)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    for name, func, extra_mode in (
        ("train", cmd_train, False),
        ("segment", cmd_segment, False),
        ("evaluate", cmd_evaluate, True),
        ("ablate", cmd_ablate, False),
        ("roc", cmd_roc, False),
        ("histograms", cmd_histograms, True),
    ):
        cmd = sub.add_parser(name)
        _add_common(cmd)
        if extra_mode:
            cmd.add_argument("--mode", choices=MODES)
        cmd.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FormatError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
