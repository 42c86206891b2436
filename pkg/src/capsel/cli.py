"""Command-line pipeline: synth, select, run, report.

Configuration comes from an INI file (sections [run], [ods], [cea],
[train], [synth], [paths]) with command-line flags taking precedence.
Select and run write the fully resolved configuration beside their
outputs, so any run can be replayed exactly from its artifacts; synth
records its resolved spec inside metadata.json.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from .augment import CeaConfig, attention_scores, augment, blend_prompt
from .core import (
    CaptionEmbeddings,
    EmbeddingSet,
    LossProfile,
    OdsConfig,
    ValidationError,
)
from .fileio import FormatError, read_embeddings, read_labels, write_embeddings, write_labels
from .harness import (
    RunConfig,
    _normalized_for_selection,
    aggregate_rows,
    baseline_topk,
    budget_for,
    read_summary_csv,
    run,
    write_aggregate_csv,
    write_eval_csv,
    write_projection_csv,
    write_summary_csv,
)
from .probe import TrainConfig, load_probe, pool_losses, save_probe
from .selection import OptimizationError, selection_probability
from .synth import ConfigError, SynthSpec, boosted_loss_scale, orthogonal_shift, synth_dataset

SECTION_FIELDS = {
    "run": ("strategy", "loops", "selection_ratio", "total_batches", "eval_every",
            "target_accuracy", "seed"),
    "ods": ("learning_rate", "max_iterations", "convergence_window", "convergence_tol",
            "ensemble_size", "ridge", "diversity_weight"),
    "cea": ("eta", "prompt_weight"),
    "train": ("batch_size", "learning_rate", "momentum"),
    "synth": ("class_count", "samples_per_class", "eval_per_class", "dim",
              "cluster_spread", "min_angle_deg", "caption_noise", "boost_classes",
              "boost_factor", "shift_magnitude", "shift_fraction",
              "equal_angle_deg", "close_pair_angle_deg", "class_share", "seed"),
}

PATH_KEYS = ("pool", "labels", "eval_pool", "eval_labels", "captions", "prompt",
             "metadata", "losses", "probe", "out")

# flag destination -> (section, key); shared across subcommands
FLAG_MAP = {
    "strategy": ("run", "strategy"),
    "loops": ("run", "loops"),
    "ratio": ("run", "selection_ratio"),
    "total_batches": ("run", "total_batches"),
    "eval_every": ("run", "eval_every"),
    "target_acc": ("run", "target_accuracy"),
    "seed": ("run", "seed"),
    "ods_lr": ("ods", "learning_rate"),
    "ods_iterations": ("ods", "max_iterations"),
    "ods_window": ("ods", "convergence_window"),
    "ods_tol": ("ods", "convergence_tol"),
    "ods_ensemble": ("ods", "ensemble_size"),
    "ods_ridge": ("ods", "ridge"),
    "diversity_weight": ("ods", "diversity_weight"),
    "eta": ("cea", "eta"),
    "prompt_weight": ("cea", "prompt_weight"),
    "batch_size": ("train", "batch_size"),
    "train_lr": ("train", "learning_rate"),
    "momentum": ("train", "momentum"),
    "classes": ("synth", "class_count"),
    "per_class": ("synth", "samples_per_class"),
    "eval_per_class": ("synth", "eval_per_class"),
    "dim": ("synth", "dim"),
    "spread": ("synth", "cluster_spread"),
    "min_angle": ("synth", "min_angle_deg"),
    "caption_noise": ("synth", "caption_noise"),
    "boost_classes": ("synth", "boost_classes"),
    "boost_factor": ("synth", "boost_factor"),
    "shift_magnitude": ("synth", "shift_magnitude"),
    "shift_fraction": ("synth", "shift_fraction"),
    "equal_angle": ("synth", "equal_angle_deg"),
    "close_pair_angle": ("synth", "close_pair_angle_deg"),
    "class_share": ("synth", "class_share"),
    "synth_seed": ("synth", "seed"),
}


def _to_text(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _defaults() -> dict:
    sources = {"run": RunConfig(), "ods": OdsConfig(), "cea": CeaConfig(),
               "train": TrainConfig(), "synth": SynthSpec()}
    out = {}
    for section, keys in SECTION_FIELDS.items():
        src = sources[section]
        vals = {}
        for key in keys:
            if key == "boost_classes":
                vals[key] = _to_text(src.loss_boost_classes)
            elif key == "shift_magnitude":
                vals[key] = "0.0"
            else:
                vals[key] = _to_text(getattr(src, key))
        out[section] = vals
    return out


def resolve_config(args, sections) -> tuple[dict, dict]:
    """Merge defaults <- config file <- explicit flags; returns (values, paths)."""
    resolved = {s: dict(vals) for s, vals in _defaults().items() if s in sections}
    paths = {k: None for k in PATH_KEYS}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        parser = configparser.ConfigParser()
        if not parser.read(cfg_path):
            raise OSError(f"cannot read config file {cfg_path}")
        for section in sections:
            if parser.has_section(section):
                for key, value in parser.items(section):
                    if key not in resolved[section]:
                        raise ValidationError(f"unknown key {key!r} in [{section}]")
                    resolved[section][key] = value
        if parser.has_section("paths"):
            for key, value in parser.items("paths"):
                if key not in paths:
                    raise ValidationError(f"unknown key {key!r} in [paths]")
                paths[key] = None if value.lower() == "none" else value
    for dest, (section, key) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None and section in resolved:
            resolved[section][key] = _to_text(value)
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = value
    return resolved, paths


def write_resolved(resolved: dict, paths: dict, out_path) -> None:
    parser = configparser.ConfigParser()
    for section, keys in SECTION_FIELDS.items():
        if section in resolved:
            parser[section] = {k: resolved[section][k] for k in keys}
    path_items = {k: paths[k] for k in PATH_KEYS if paths[k] is not None}
    if path_items:
        parser["paths"] = path_items
    with open(out_path, "w", newline="\n") as fh:
        parser.write(fh)


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _opt_float(text: str):
    return None if text.strip().lower() in ("none", "") else float(text)


def _int_tuple(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part.strip() != "")


def _opt_float_tuple(text: str):
    if text.strip().lower() in ("none", ""):
        return None
    return tuple(float(part) for part in text.split(",") if part.strip() != "")


def build_ods_config(vals: dict) -> OdsConfig:
    return OdsConfig(
        learning_rate=_float(vals["learning_rate"]),
        max_iterations=_int(vals["max_iterations"]),
        convergence_window=_int(vals["convergence_window"]),
        convergence_tol=_float(vals["convergence_tol"]),
        ensemble_size=_int(vals["ensemble_size"]),
        ridge=_float(vals["ridge"]),
        diversity_weight=_float(vals["diversity_weight"]),
    )


def build_cea_config(vals: dict) -> CeaConfig:
    return CeaConfig(eta=_float(vals["eta"]), prompt_weight=_float(vals["prompt_weight"]))


def build_train_config(vals: dict) -> TrainConfig:
    return TrainConfig(
        batch_size=_int(vals["batch_size"]),
        learning_rate=_float(vals["learning_rate"]),
        momentum=_float(vals["momentum"]),
    )


def build_run_config(resolved: dict) -> RunConfig:
    r = resolved["run"]
    return RunConfig(
        loops=_int(r["loops"]),
        selection_ratio=_float(r["selection_ratio"]),
        strategy=r["strategy"],
        total_batches=_int(r["total_batches"]),
        eval_every=_int(r["eval_every"]),
        target_accuracy=_opt_float(r["target_accuracy"]),
        seed=_int(r["seed"]),
        ods=build_ods_config(resolved["ods"]),
        cea=build_cea_config(resolved["cea"]),
        train=build_train_config(resolved["train"]),
    )


def build_synth_spec(resolved: dict) -> tuple[SynthSpec, float]:
    s = resolved["synth"]
    magnitude = _float(s["shift_magnitude"])
    shift = None
    if magnitude > 0.0:
        shift = orthogonal_shift(_int(s["dim"]), magnitude, _int(s["seed"]))
    spec = SynthSpec(
        class_count=_int(s["class_count"]),
        samples_per_class=_int(s["samples_per_class"]),
        eval_per_class=_int(s["eval_per_class"]),
        dim=_int(s["dim"]),
        cluster_spread=_float(s["cluster_spread"]),
        min_angle_deg=_float(s["min_angle_deg"]),
        caption_noise=_float(s["caption_noise"]),
        loss_boost_classes=_int_tuple(s["boost_classes"]),
        boost_factor=_float(s["boost_factor"]),
        shift=shift,
        shift_fraction=_float(s["shift_fraction"]),
        equal_angle_deg=_opt_float(s["equal_angle_deg"]),
        close_pair_angle_deg=_opt_float(s["close_pair_angle_deg"]),
        class_share=_opt_float_tuple(s["class_share"]),
        seed=_int(s["seed"]),
    )
    return spec, magnitude


def _load_pool(pool_path, labels_path, classes=None) -> EmbeddingSet:
    vectors = read_embeddings(pool_path)
    labels = read_labels(labels_path)
    if classes is None:
        classes = int(labels.max()) + 1 if labels.size else 2
    return EmbeddingSet(vectors, labels, max(classes, 2))


def _load_captions(captions_path, prompt_path) -> CaptionEmbeddings:
    vectors = read_embeddings(captions_path)
    prompt = None
    if prompt_path is not None:
        rows = read_embeddings(prompt_path)
        if rows.shape[0] != 1:
            raise ValidationError(f"{prompt_path}: prompt file must contain exactly one row")
        prompt = rows[0].astype(np.float64)
    return CaptionEmbeddings(vectors, prompt=prompt)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    resolved, paths = resolve_config(args, ("synth",))
    if paths["out"] is None:
        raise ValidationError("synth requires an output directory (--out)")
    spec, magnitude = build_synth_spec(resolved)
    data = synth_dataset(spec)
    out = Path(paths["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(data.train, out / "train.vcf")
    write_labels(data.train.labels, out / "train.vcl")
    write_embeddings(data.eval_pool, out / "eval.vcf")
    write_labels(data.eval_pool.labels, out / "eval.vcl")
    write_embeddings(data.captions, out / "captions.vcf")
    meta = dict(data.metadata)
    meta["resolved_spec"] = dict(resolved["synth"])
    meta["shift_magnitude"] = magnitude
    with open(out / "metadata.json", "w", newline="\n") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote 6 files to {out}")
    return 0


def _losses_for(args, paths, pool: EmbeddingSet):
    if paths["losses"] is not None:
        values = np.loadtxt(paths["losses"], ndmin=1, dtype=np.float64)
        return LossProfile(values)
    if paths["probe"] is not None:
        return pool_losses(load_probe(paths["probe"]), pool)
    return None


def cmd_select(args) -> int:
    resolved, paths = resolve_config(args, ("run", "ods", "cea"))
    for required in ("pool", "labels", "out"):
        if paths[required] is None:
            raise ValidationError(f"select requires --{required.replace('_', '-')}")
    pool = _load_pool(paths["pool"], paths["labels"], args.classes)
    strategy = resolved["run"]["strategy"]
    if strategy not in ("vecaf", "random", "topk_loss", "diversity_only"):
        raise ValidationError(f"unknown strategy {strategy!r}")
    ratio = _float(resolved["run"]["selection_ratio"])
    seed = _int(resolved["run"]["seed"])
    ods_cfg = build_ods_config(resolved["ods"])
    cea_cfg = build_cea_config(resolved["cea"])
    if not 0.0 < ratio <= 1.0:
        raise ValidationError("selection ratio must lie in (0, 1]")
    if ratio * pool.count < 1.0:
        raise ValidationError(
            f"budget rounds to zero: ratio {ratio} on {pool.count} samples")
    budget = budget_for(pool.count, ratio)

    profile = _losses_for(args, paths, pool)
    if profile is not None and profile.count != pool.count:
        raise ValidationError(
            f"{profile.count} losses for {pool.count} samples")

    steering = cea_cfg.prompt_weight > 0.0
    selection_pool = pool
    if steering and strategy in ("vecaf", "diversity_only"):
        if paths["captions"] is None or paths["prompt"] is None:
            raise ValidationError("prompt steering requires --captions and --prompt")
        captions = _load_captions(paths["captions"], paths["prompt"])
        captions.require_aligned(pool)
        blended = blend_prompt(captions.vectors, captions.prompt, cea_cfg.prompt_weight)
        scores = attention_scores(pool.vectors, blended)
        steered = augment(pool.vectors, blended, scores, cea_cfg.eta)
        selection_pool = EmbeddingSet(steered, pool.labels, pool.class_count)

    trace = None
    model = None
    seed_seq = np.random.SeedSequence([seed, 1])
    if strategy == "vecaf":
        base = profile if profile is not None else LossProfile.uniform(pool.count)
        indices, traces, model = _ods_select_with_model(
            selection_pool, _normalized_for_selection(base), budget, ods_cfg, seed_seq)
        trace = traces[0]
    elif strategy == "diversity_only":
        indices, traces, model = _ods_select_with_model(
            selection_pool, LossProfile.uniform(pool.count), budget, ods_cfg, seed_seq)
        trace = traces[0]
    elif strategy == "topk_loss":
        if profile is None:
            raise ValidationError(
                "strategy topk_loss requires a losses source (--probe or --losses)")
        indices = baseline_topk(profile, budget)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, 7]))
        indices = np.sort(rng.choice(pool.count, size=budget, replace=False)).astype(np.int64)

    out = Path(paths["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "indices.txt", "w", newline="\n") as fh:
        fh.write("\n".join(str(int(i)) for i in indices) + "\n")
    _write_select_diagnostics(out / "diagnostics.csv", trace, model, selection_pool, profile)
    write_resolved(resolved, paths, out / "select_config.ini")
    print(f"selected {budget} of {pool.count} ({strategy})")
    return 0


def _ods_select_with_model(pool, profile, budget, ods_cfg, seed_seq):
    # mirrors the harness selection path but keeps the final model for diagnostics
    from .selection import debias, optimize, select

    members, traces = [], []
    for child in seed_seq.spawn(ods_cfg.ensemble_size):
        model, member_trace = optimize(pool, profile, budget, ods_cfg, np.random.default_rng(child))
        members.append(model)
        traces.append(member_trace)
    final = debias(members, ods_cfg.ridge)
    return select(pool, final), traces, final


def _write_select_diagnostics(path, trace, model, pool, profile) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("record,key,value\n")
        if trace is not None:
            for i, value in enumerate(trace.objectives):
                fh.write(f"objective,{i},{repr(float(value))}\n")
            fh.write(f"converged,,{int(trace.converged)}\n")
        if model is not None:
            p_sel = selection_probability(pool, LossProfile.uniform(pool.count), model)
            for key, value in (("min", p_sel.min()), ("mean", p_sel.mean()), ("max", p_sel.max())):
                fh.write(f"selection_probability,{key},{repr(float(value))}\n")
        if profile is not None:
            lo = profile.losses
            for key, value in (("min", lo.min()), ("mean", lo.mean()), ("max", lo.max())):
                fh.write(f"loss,{key},{repr(float(value))}\n")


def cmd_run(args) -> int:
    resolved, paths = resolve_config(args, ("run", "ods", "cea", "train"))
    for required in ("pool", "labels", "eval_pool", "eval_labels", "captions", "out"):
        if paths[required] is None:
            raise ValidationError(f"run requires --{required.replace('_', '-')}")
    pool = _load_pool(paths["pool"], paths["labels"], args.classes)
    eval_pool = _load_pool(paths["eval_pool"], paths["eval_labels"], args.classes)
    if eval_pool.class_count != pool.class_count:
        eval_pool = EmbeddingSet(eval_pool.vectors, eval_pool.labels, pool.class_count)
    captions = _load_captions(paths["captions"], paths["prompt"])
    cfg = build_run_config(resolved)

    loss_scale = None
    if paths["metadata"] is not None:
        with open(paths["metadata"]) as fh:
            loss_scale = boosted_loss_scale(json.load(fh))

    report = run(pool, captions, eval_pool, cfg, loss_scale=loss_scale)

    out = Path(paths["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_eval_csv(report, out / "eval.csv")
    write_summary_csv(report, out / "summary.csv")
    save_probe(report.probe, out / "probe.vcp")
    write_resolved(resolved, paths, out / "run_config.ini")
    if args.projection:
        union = np.unique(np.concatenate([rec.selected for rec in report.records]))
        write_projection_csv(pool, {cfg.strategy: union}, out / "projection.csv")
    print(f"{cfg.strategy}: final accuracy {report.final_accuracy}, b2a {report.b2a}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.summaries:
        rows.extend(read_summary_csv(path))
    entries = aggregate_rows(rows)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(entries, out)
    for entry in entries:
        print(f"{entry['strategy']}: runs={entry['runs']} "
              f"b2a_median={entry['b2a_median']} final_acc_median={entry['final_acc_median']}")
    return 0


# ---------------------------------------------------------------- parser

def _add_config_flag(sub) -> None:
    sub.add_argument("--config", help="INI config file; flags override its values")


def _add_path_flags(sub, keys) -> None:
    for key in keys:
        sub.add_argument(f"--{key.replace('_', '-')}", dest=key)


def _add_ods_cea_flags(sub) -> None:
    sub.add_argument("--ods-lr", type=float)
    sub.add_argument("--ods-iterations", type=int)
    sub.add_argument("--ods-window", type=int)
    sub.add_argument("--ods-tol", type=float)
    sub.add_argument("--ods-ensemble", type=int)
    sub.add_argument("--ods-ridge", type=float)
    sub.add_argument("--diversity-weight", type=float)
    sub.add_argument("--eta", type=float)
    sub.add_argument("--prompt-weight", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capsel",
        description="Loss-aware data selection with caption-guided augmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic embedding benchmark")
    _add_config_flag(p_synth)
    p_synth.add_argument("--classes", type=int)
    p_synth.add_argument("--per-class", type=int, dest="per_class")
    p_synth.add_argument("--eval-per-class", type=int, dest="eval_per_class")
    p_synth.add_argument("--dim", type=int)
    p_synth.add_argument("--spread", type=float)
    p_synth.add_argument("--min-angle", type=float, dest="min_angle")
    p_synth.add_argument("--caption-noise", type=float, dest="caption_noise")
    p_synth.add_argument("--boost-classes", dest="boost_classes")
    p_synth.add_argument("--boost-factor", type=float, dest="boost_factor")
    p_synth.add_argument("--shift-magnitude", type=float, dest="shift_magnitude")
    p_synth.add_argument("--shift-fraction", type=float, dest="shift_fraction")
    p_synth.add_argument("--equal-angle", type=float, dest="equal_angle",
                         help="place all class centers pairwise at this angle (degrees)")
    p_synth.add_argument("--close-pair-angle", type=float, dest="close_pair_angle",
                         help="pull class 1 to this angle from class 0 (degrees)")
    p_synth.add_argument("--class-share", dest="class_share",
                         help="comma-separated class frequencies, e.g. 0.05,0.05,0.3,0.3,0.3")
    p_synth.add_argument("--seed", type=int, dest="synth_seed")
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(handler=cmd_synth)

    p_select = sub.add_parser("select", help="select a subset from a pool of embeddings")
    _add_config_flag(p_select)
    _add_path_flags(p_select, ("pool", "labels", "captions", "prompt", "losses", "probe", "out"))
    p_select.add_argument("--classes", type=int)
    p_select.add_argument("--strategy")
    p_select.add_argument("--ratio", type=float)
    p_select.add_argument("--seed", type=int)
    _add_ods_cea_flags(p_select)
    p_select.set_defaults(handler=cmd_select)

    p_run = sub.add_parser("run", help="run the full multi-loop selection + finetune protocol")
    _add_config_flag(p_run)
    _add_path_flags(p_run, ("pool", "labels", "eval_pool", "eval_labels", "captions",
                            "prompt", "metadata", "out"))
    p_run.add_argument("--classes", type=int)
    p_run.add_argument("--strategy")
    p_run.add_argument("--ratio", type=float)
    p_run.add_argument("--loops", type=int)
    p_run.add_argument("--total-batches", type=int, dest="total_batches")
    p_run.add_argument("--eval-every", type=int, dest="eval_every")
    p_run.add_argument("--target-acc", type=float, dest="target_acc")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--batch-size", type=int, dest="batch_size")
    p_run.add_argument("--train-lr", type=float, dest="train_lr")
    p_run.add_argument("--momentum", type=float)
    p_run.add_argument("--projection", action="store_true",
                       help="also write a 2-D projection CSV with selection flags")
    _add_ods_cea_flags(p_run)
    p_run.set_defaults(handler=cmd_run)

    p_report = sub.add_parser("report", help="aggregate summary CSVs across seeds")
    p_report.add_argument("summaries", nargs="+", help="summary CSV files from capsel run")
    p_report.add_argument("--out", required=True)
    p_report.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValidationError, FormatError, ConfigError, OptimizationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
