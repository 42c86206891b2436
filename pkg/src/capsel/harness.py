"""Multi-loop finetuning harness.

Each loop: score the pool with the current probe, pick a subset under
the configured strategy, optionally pull the chosen embeddings toward
their captions, then continue training the probe on that subset for an
equal share of the total batch budget.  Evaluation runs on a held-out
pool at a fixed cadence so runs can be compared by how many batches they
need to reach a target accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import CeaConfig, attention_scores, augment, blend_prompt, overshoot_count
from .core import (
    CaptionEmbeddings,
    EmbeddingSet,
    LossProfile,
    OdsConfig,
    ValidationError,
)
from .probe import ProbeModel, SgdTrainer, TrainConfig, evaluate, pool_losses
from .selection import debias, optimize, select

STRATEGIES = ("vecaf", "random", "topk_loss", "diversity_only")

NOT_REACHED = "not reached"
NO_TARGET = "n/a"

EVAL_HEADER = "seed,strategy,loop,batches,train_loss,eval_acc"
SUMMARY_HEADER = "seed,strategy,loops,ratio,total_batches,target_acc,b2a,final_acc"


@dataclass(frozen=True)
class RunConfig:
    loops: int = 3
    selection_ratio: float = 0.01
    strategy: str = "vecaf"
    total_batches: int = 300
    eval_every: int = 10
    target_accuracy: float | None = None
    seed: int = 0
    ods: OdsConfig = field(default_factory=OdsConfig)
    cea: CeaConfig = field(default_factory=CeaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.loops < 1:
            raise ValidationError("loops must be at least 1")
        if not 0.0 < self.selection_ratio <= 1.0:
            raise ValidationError("selection_ratio must lie in (0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.total_batches < 0:
            raise ValidationError("total_batches must be non-negative")
        if self.eval_every < 1:
            raise ValidationError("eval_every must be at least 1")
        if self.target_accuracy is not None and not 0.0 < self.target_accuracy <= 1.0:
            raise ValidationError("target_accuracy must lie in (0, 1]")


@dataclass(frozen=True)
class EvalPoint:
    loop: int
    batches: int
    train_loss: float
    eval_acc: float


@dataclass(frozen=True)
class LoopRecord:
    loop: int
    selected: np.ndarray
    objective_trace: np.ndarray | None
    attention_min: float | None
    attention_mean: float | None
    attention_max: float | None
    overshoot: int
    train_losses: np.ndarray


@dataclass(frozen=True)
class LoopReport:
    config: RunConfig
    records: tuple
    eval_points: tuple
    b2a: object
    final_accuracy: float
    probe: ProbeModel
    ods_calls: int
    cea_calls: int

    def __post_init__(self):
        batches = [p.batches for p in self.eval_points]
        if any(b2 <= b1 for b1, b2 in zip(batches, batches[1:])):
            raise ValidationError("eval batch counts must be strictly increasing")
        for rec in self.records:
            if len(set(rec.selected.tolist())) != rec.selected.shape[0]:
                raise ValidationError(f"loop {rec.loop} selected duplicate indices")


def budget_for(pool_count: int, ratio: float) -> int:
    return int(np.ceil(ratio * pool_count))


def baseline_topk(losses: LossProfile, budget: int) -> np.ndarray:
    """Indices of the largest losses; equal losses resolve to lower indices."""
    if budget < 1 or budget > losses.count:
        raise ValidationError(f"budget {budget} invalid for {losses.count} losses")
    order = np.argsort(-losses.losses, kind="stable")
    return order[:budget].astype(np.int64)


def _member_rngs(seed_seq: np.random.SeedSequence, count: int):
    return [np.random.default_rng(s) for s in seed_seq.spawn(count)]


def _ods_select(pool: EmbeddingSet, profile: LossProfile, budget: int,
                config: OdsConfig, seed_seq: np.random.SeedSequence):
    """Ensemble optimize + debias + select; returns (indices, member traces)."""
    members = []
    traces = []
    for rng in _member_rngs(seed_seq, config.ensemble_size):
        model, trace = optimize(pool, profile, budget, config, rng)
        members.append(model)
        traces.append(trace)
    final = debias(members, config.ridge)
    return select(pool, final), traces


def _as_seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def baseline_diversity_only(pool: EmbeddingSet, budget: int, config: OdsConfig, seed) -> np.ndarray:
    """The selection pipeline with uniform losses: diversity does all the work."""
    indices, _ = _ods_select(pool, LossProfile.uniform(pool.count), budget, config, _as_seed_seq(seed))
    return indices


def b2a(eval_points, target_accuracy: float):
    """First recorded batch count whose accuracy reaches the target."""
    for point in eval_points:
        if point.eval_acc >= target_accuracy:
            return point.batches
    return NOT_REACHED


def _scaled_losses(probe: ProbeModel, pool: EmbeddingSet, loss_scale) -> LossProfile:
    return pool_losses(probe, pool, scale=loss_scale)


def _normalized_for_selection(profile: LossProfile) -> LossProfile:
    # mean-normalize so the diversity term keeps the same relative strength
    # across probe loss scales; constant profiles short-circuit to exact ones
    lo = profile.losses
    if lo.max() == lo.min():
        return LossProfile.uniform(profile.count)
    return LossProfile(lo / lo.mean())


def run(pool: EmbeddingSet, captions: CaptionEmbeddings, eval_pool: EmbeddingSet,
        config: RunConfig, loss_scale=None) -> LoopReport:
    """Execute the full multi-loop protocol and report every eval point.

    `loss_scale` optionally multiplies the probe's per-sample losses
    (a stand-in for externally known hard subpopulations).
    """
    captions.require_aligned(pool)
    if eval_pool.dim != pool.dim or eval_pool.class_count != pool.class_count:
        raise ValidationError("eval pool shape does not match the training pool")
    if loss_scale is not None:
        loss_scale = np.asarray(loss_scale, dtype=np.float64).reshape(-1)
        if loss_scale.shape[0] != pool.count:
            raise ValidationError(f"{loss_scale.shape[0]} loss-scale entries for {pool.count} samples")
    budget = budget_for(pool.count, config.selection_ratio)
    if budget > pool.count:
        raise ValidationError("selection budget exceeds the pool")
    steering = config.cea.prompt_weight > 0.0 and captions.prompt is not None
    if config.cea.prompt_weight > 0.0 and captions.prompt is None:
        raise ValidationError("prompt steering enabled but captions carry no prompt vector")

    per_loop = config.total_batches // config.loops
    probe = ProbeModel.zeros(pool.class_count, pool.dim)
    records: list[LoopRecord] = []
    eval_points: list[EvalPoint] = []
    cumulative = 0
    ods_calls = 0
    cea_calls = 0

    blended = None
    if steering:
        blended = blend_prompt(captions.vectors, captions.prompt, config.cea.prompt_weight)

    for loop in range(1, config.loops + 1):
        profile = _scaled_losses(probe, pool, loss_scale)
        loop_seq = np.random.SeedSequence([config.seed, loop])

        trace_out = None
        att = (None, None, None)
        overshoot = 0
        if config.strategy == "vecaf":
            selection_pool = pool
            if steering:
                scores = attention_scores(pool.vectors, blended)
                steered = augment(pool.vectors, blended, scores, config.cea.eta)
                cea_calls += 1
                selection_pool = EmbeddingSet(steered, pool.labels, pool.class_count)
            selected, traces = _ods_select(
                selection_pool, _normalized_for_selection(profile), budget, config.ods, loop_seq
            )
            ods_calls += config.ods.ensemble_size
            trace_out = traces[0].objectives
        elif config.strategy == "diversity_only":
            selected, traces = _ods_select(
                pool, LossProfile.uniform(pool.count), budget, config.ods, loop_seq
            )
            ods_calls += config.ods.ensemble_size
            trace_out = traces[0].objectives
        elif config.strategy == "topk_loss":
            selected = baseline_topk(profile, budget)
        else:  # random
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, loop, 7]))
            selected = np.sort(rng.choice(pool.count, size=budget, replace=False)).astype(np.int64)

        subset_vectors = pool.vectors[selected].astype(np.float64)
        subset_labels = pool.labels[selected]
        if config.strategy == "vecaf":
            texts = (blended if steering else captions.vectors.astype(np.float64))[selected]
            scores = attention_scores(subset_vectors, texts)
            subset_vectors = augment(subset_vectors, texts, scores, config.cea.eta)
            cea_calls += 1
            att = (float(scores.min()), float(scores.mean()), float(scores.max()))
            overshoot = overshoot_count(scores, config.cea.eta)

        train_seed = int(np.random.SeedSequence([config.seed, loop, 11]).generate_state(1)[0])
        loop_cfg = TrainConfig(
            batch_size=config.train.batch_size,
            learning_rate=config.train.learning_rate,
            batches_per_loop=per_loop,
            momentum=config.train.momentum,
            seed=train_seed,
        )
        trainer = SgdTrainer(probe, subset_vectors, subset_labels, loop_cfg)
        batch_losses = []
        for _ in range(per_loop):
            loss = trainer.step()
            batch_losses.append(loss)
            cumulative += 1
            if cumulative % config.eval_every == 0:
                eval_points.append(
                    EvalPoint(loop, cumulative, loss, evaluate(trainer.snapshot(), eval_pool))
                )
        probe = trainer.snapshot()
        if per_loop > 0 and cumulative % config.eval_every != 0:
            eval_points.append(EvalPoint(loop, cumulative, batch_losses[-1], evaluate(probe, eval_pool)))

        records.append(
            LoopRecord(
                loop=loop,
                selected=np.asarray(selected, dtype=np.int64),
                objective_trace=trace_out,
                attention_min=att[0],
                attention_mean=att[1],
                attention_max=att[2],
                overshoot=overshoot,
                train_losses=np.asarray(batch_losses),
            )
        )

    if not eval_points:
        eval_points.append(EvalPoint(config.loops, cumulative, float("nan"), evaluate(probe, eval_pool)))

    final_acc = eval_points[-1].eval_acc
    reached = NO_TARGET if config.target_accuracy is None else b2a(eval_points, config.target_accuracy)
    return LoopReport(
        config=config,
        records=tuple(records),
        eval_points=tuple(eval_points),
        b2a=reached,
        final_accuracy=final_acc,
        probe=probe,
        ods_calls=ods_calls,
        cea_calls=cea_calls,
    )


# ---------------------------------------------------------------- reports

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_eval_csv(report: LoopReport, path) -> None:
    """One row per eval point: seed,strategy,loop,batches,train_loss,eval_acc."""
    cfg = report.config
    with open(path, "w", newline="\n") as fh:
        fh.write(EVAL_HEADER + "\n")
        for p in report.eval_points:
            fh.write(
                f"{cfg.seed},{cfg.strategy},{p.loop},{p.batches},"
                f"{_fmt(float(p.train_loss))},{_fmt(float(p.eval_acc))}\n"
            )


def write_summary_csv(report: LoopReport, path) -> None:
    """Single-row run summary; carries the config fields reports must agree on."""
    cfg = report.config
    target = NO_TARGET if cfg.target_accuracy is None else _fmt(float(cfg.target_accuracy))
    with open(path, "w", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        fh.write(
            f"{cfg.seed},{cfg.strategy},{cfg.loops},{_fmt(float(cfg.selection_ratio))},"
            f"{cfg.total_batches},{target},{report.b2a},{_fmt(float(report.final_accuracy))}\n"
        )


def read_summary_csv(path) -> list[dict]:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != SUMMARY_HEADER:
        raise ValidationError(f"{path}: not a run summary (unexpected header)")
    keys = SUMMARY_HEADER.split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(keys):
            raise ValidationError(f"{path}: malformed summary row {ln!r}")
        rows.append(dict(zip(keys, parts)))
    return rows


def _quartiles(values: np.ndarray) -> tuple[float, float]:
    median = float(np.median(values))
    q1, q3 = np.percentile(values, [25, 75])
    return median, float(q3 - q1)


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Median/IQR of B2A and final accuracy per strategy across seeds.

    Rows must come from runs with identical loop/ratio/budget/target
    settings; mismatches are reported by key name.  Unreached targets
    enter the statistics as +inf.
    """
    if not rows:
        raise ValidationError("no summary rows to aggregate")
    fingerprint_keys = ("loops", "ratio", "total_batches", "target_acc")
    reference = {k: rows[0][k] for k in fingerprint_keys}
    mismatched = sorted(
        {k for row in rows for k in fingerprint_keys if row[k] != reference[k]}
    )
    if mismatched:
        raise ValidationError(f"summaries disagree on: {', '.join(mismatched)}")

    by_strategy: dict[str, list[dict]] = {}
    for row in rows:
        by_strategy.setdefault(row["strategy"], []).append(row)

    out = []
    for strategy in sorted(by_strategy):
        group = by_strategy[strategy]
        acc = np.array([float(r["final_acc"]) for r in group])
        acc_median, acc_iqr = _quartiles(acc)
        entry = {
            "strategy": strategy,
            "runs": len(group),
            "final_acc_median": _fmt(acc_median),
            "final_acc_iqr": _fmt(acc_iqr),
        }
        if all(r["b2a"] == NO_TARGET for r in group):
            entry["b2a_median"] = NO_TARGET
            entry["b2a_iqr"] = NO_TARGET
        else:
            counts = np.array(
                [np.inf if r["b2a"] == NOT_REACHED else float(r["b2a"]) for r in group]
            )
            med = float(np.median(counts))
            if not np.isfinite(med):
                entry["b2a_median"] = NOT_REACHED
                entry["b2a_iqr"] = NOT_REACHED
            else:
                q1, q3 = np.percentile(counts, [25, 75])
                iqr = float(q3 - q1)
                entry["b2a_median"] = _fmt(med)
                entry["b2a_iqr"] = _fmt(iqr) if np.isfinite(iqr) else NOT_REACHED
        out.append(entry)
    return out


AGGREGATE_HEADER = "strategy,runs,b2a_median,b2a_iqr,final_acc_median,final_acc_iqr"


def write_aggregate_csv(entries: list[dict], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(AGGREGATE_HEADER + "\n")
        for e in entries:
            fh.write(
                f"{e['strategy']},{e['runs']},{e['b2a_median']},{e['b2a_iqr']},"
                f"{e['final_acc_median']},{e['final_acc_iqr']}\n"
            )


def pca_projection(pool: EmbeddingSet) -> np.ndarray:
    """Project the pool onto its two leading principal axes.

    Axis signs follow a fixed convention (largest-magnitude loading made
    positive) so projections are reproducible across runs.
    """
    x = pool.vectors.astype(np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:2].copy()
    if axes.shape[0] < 2:
        axes = np.vstack([axes, np.zeros_like(axes[0])])
    for i in range(2):
        j = int(np.argmax(np.abs(axes[i])))
        if axes[i, j] < 0:
            axes[i] = -axes[i]
    return centered @ axes.T


def write_projection_csv(pool: EmbeddingSet, selections: dict, path) -> None:
    """2-D view of the pool with one selected-flag column per strategy."""
    coords = pca_projection(pool)
    strategies = sorted(selections)
    flags = {}
    for s in strategies:
        mask = np.zeros(pool.count, dtype=int)
        mask[np.asarray(selections[s], dtype=np.int64)] = 1
        flags[s] = mask
    with open(path, "w", newline="\n") as fh:
        fh.write("index,x,y" + "".join(f",selected_{s}" for s in strategies) + "\n")
        for i in range(pool.count):
            row = f"{i},{_fmt(float(coords[i, 0]))},{_fmt(float(coords[i, 1]))}"
            row += "".join(f",{flags[s][i]}" for s in strategies)
            fh.write(row + "\n")
