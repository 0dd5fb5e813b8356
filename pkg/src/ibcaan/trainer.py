"""Training loop, Adam, checkpoint selection/averaging and the ablation grid."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tape, make_rng
from .errors import DataError
from .metrics import eer_from_scores, records_from_arrays, write_scores
from .model import ModelDims, ModelParams, init_params, model_forward, predict_scores
from .objectives import (
    LossBreakdown,
    ce_multiclass,
    class_weights,
    grl_lambda,
    kl_std_normal,
    total_loss,
    weighted_bce,
)
from .shiftbench import SPLITS, Dataset, Split
from .variants import TABLE_ORDER, Variant

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "IB_CAAN"
    beta: float = 0.001
    alpha: float = 0.5
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    topk: int = 5
    hidden: int = 64
    z_dim: int = 16
    feature_layers: int = 2
    class_weights: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant).value)
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.topk < 1:
            raise ValueError("epochs, batch_size and topk must be at least 1")
        if self.topk > self.epochs:
            raise ValueError(f"topk ({self.topk}) cannot exceed epochs ({self.epochs})")
        for name in ("beta", "alpha", "lr", "adam_eps", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.class_weights is not None and (len(self.class_weights) != 2 or min(self.class_weights) <= 0):
            raise ValueError("class_weights must be a pair of positive numbers")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = list(d["class_weights"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        base = PRESETS[preset].to_dict() if preset else {}
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        base.update(d)
        return cls(**base)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def model_dims(self, dataset: Dataset) -> ModelDims:
        return ModelDims(
            input_dim=dataset.spec.input_dim,
            hidden=self.hidden,
            z_dim=self.z_dim,
            n_attacks=dataset.spec.n_train_attacks,
            feature_layers=self.feature_layers,
        )


# Desk-scale defaults, plus the published backbone settings for reference.
# The published ones assume large pretrained encoders; on the small MLP here
# their learning rates are far too low to train anything in 30 epochs.
PRESETS = {
    "desk": TrainConfig(),
    "xlsr_asv19": TrainConfig(batch_size=12, lr=1e-6, weight_decay=1e-4, adam_beta2=0.999, beta=0.001, alpha=0.5),
    "xlsr_asv5": TrainConfig(batch_size=12, lr=1e-6, weight_decay=1e-4, adam_beta2=0.999, beta=0.01, alpha=0.5),
    "rawbmamba_asv19": TrainConfig(batch_size=32, lr=1e-5, weight_decay=1e-4, adam_beta2=0.98, beta=0.001, alpha=1.0),
    "rawbmamba_asv5": TrainConfig(batch_size=32, lr=1e-5, weight_decay=1e-4, adam_beta2=0.98, beta=0.001, alpha=0.5),
}


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
        )


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: OptimizerState,
              config: TrainConfig) -> tuple[ModelParams, OptimizerState]:
    """One Adam update with decoupled weight decay.

    ``p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p``
    """
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_arrays, new_m, new_v = {}, {}, {}
    for name, p in params.arrays.items():
        g = grads[name]
        if g.shape != p.shape:
            raise TrainingError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name} at step {t}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        new_arrays[name] = p - config.lr * update - config.lr * config.weight_decay * p
        new_m[name], new_v[name] = m, v
    return params.replace(new_arrays), OptimizerState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    losses: list[LossBreakdown] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)

    def mean(self, term: str) -> float | None:
        vals = [getattr(b, term) for b in self.losses if getattr(b, term) is not None]
        return float(np.mean(vals)) if vals else None


def loss_and_grads(params: ModelParams, xb, yb, ab, variant: Variant, lam: float,
                   rng: np.random.Generator, weights, beta: float, alpha: float):
    """Forward one batch, combine the variant's losses, and backpropagate."""
    leaves = params.leaves()
    with Tape() as tape:
        out = model_forward(leaves, xb, yb, variant, lam, rng, "train")
        l_c = weighted_bce(out.logit, yb, weights)
        l_z = kl_std_normal(out.latent.mu, out.latent.sigma) if variant.uses_kl else None
        l_d = None
        if out.attack_logits is not None:
            l_d = ce_multiclass(out.attack_logits, np.asarray(ab)[out.spoof_rows])
        total, breakdown = total_loss(l_c, l_z, l_d, variant, beta, alpha)
    grads = tape.backward(total, leaves)
    return breakdown, grads


def train_epoch(params: ModelParams, state: OptimizerState, train: Split, config: TrainConfig,
                epoch_idx: int, rng: np.random.Generator, total_steps: int,
                weights: tuple[float, float], require_both_classes: bool = True,
                ) -> tuple[ModelParams, OptimizerState, EpochStats]:
    """One shuffled pass over ``train``.

    The reversal strength for each batch comes from the global step count
    ``state.t`` over ``total_steps``.  Batches without spoofed rows simply
    have no adversarial term.
    """
    if require_both_classes and not train.has_both_classes:
        raise DataError("training split must contain both bonafide and spoof examples")
    variant = Variant(config.variant)
    stats = EpochStats(epoch=epoch_idx)
    order = rng.permutation(len(train))
    for start in range(0, len(order), config.batch_size):
        idx = order[start:start + config.batch_size]
        lam = grl_lambda(min(state.t / total_steps, 1.0))
        breakdown, grads = loss_and_grads(params, train.x[idx], train.y[idx], train.a[idx],
                                          variant, lam, rng, weights, config.beta, config.alpha)
        params, state = adam_step(params, grads, state, config)
        stats.losses.append(breakdown)
        stats.lambdas.append(lam)
    return params, state, stats


def validate(params: ModelParams, split: Split) -> float:
    if not split.has_both_classes:
        raise DataError("validation split must contain both bonafide and spoof examples")
    scores = predict_scores(params, split.x)
    return eer_from_scores(scores[split.y == 0], scores[split.y == 1])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    epoch: int
    val_eer: float
    params: ModelParams
    file: str | None = None


class CheckpointSet:
    """The ``topk`` checkpoints with lowest validation EER; earlier epoch wins ties."""

    def __init__(self, topk: int):
        if topk < 1:
            raise ValueError("topk must be at least 1")
        self.topk = topk
        self.entries: list[Checkpoint] = []

    def add(self, ckpt: Checkpoint) -> bool:
        self.entries.append(ckpt)
        self.entries.sort(key=lambda c: (c.val_eer, c.epoch))
        dropped = self.entries[self.topk:]
        del self.entries[self.topk:]
        return not any(c is ckpt for c in dropped)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def average_checkpoints(checkpoints: CheckpointSet | Iterable[Checkpoint | ModelParams]) -> ModelParams:
    items = [c.params if isinstance(c, Checkpoint) else c for c in checkpoints]
    if not items:
        raise ValueError("cannot average an empty checkpoint set")
    first = items[0]
    for other in items[1:]:
        if other.arrays.keys() != first.arrays.keys() or any(
            other.arrays[k].shape != a.shape for k, a in first.arrays.items()
        ):
            raise ValueError("checkpoints have mismatched parameter shapes")
    mean = {k: np.mean([it.arrays[k] for it in items], axis=0) for k in first.arrays}
    return first.replace(mean)


def checkpoint_to_dict(params: ModelParams, **meta) -> dict:
    return {
        **meta,
        "dims": asdict(params.dims),
        "params": {k: {"shape": list(a.shape), "data": a.reshape(-1).tolist()}
                   for k, a in params.arrays.items()},
    }


def save_checkpoint(path, params: ModelParams, **meta) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_dict(params, **meta), sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
        dims = ModelDims(**blob.pop("dims"))
        arrays = {}
        for k, entry in blob.pop("params").items():
            arr = np.asarray(entry["data"], dtype=np.float64)
            arrays[k] = arr.reshape(entry["shape"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from None
    return ModelParams(dims, arrays), blob


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def evaluate_splits(params: ModelParams, dataset: Dataset) -> dict[str, float]:
    """EER per split, skipping splits that lack either class."""
    return {name: validate(params, s) for name, s in dataset.splits.items() if s.has_both_classes}


def run_experiment(config: TrainConfig, dataset: Dataset, out_dir=None) -> dict:
    """Train, keep the top-k epochs by validation EER, average them, evaluate.

    With ``out_dir`` the report, the kept and averaged checkpoints and one
    score file per split are written there.  Nothing in the report depends
    on wall-clock time, so reruns with the same seed are byte-identical.
    """
    variant = Variant(config.variant)
    train = dataset.splits["train"]
    if not train.has_both_classes:
        raise DataError("training split must contain both bonafide and spoof examples")
    val = dataset.splits["val"]

    rng = make_rng(config.seed)
    dims = config.model_dims(dataset)
    params = init_params(dims, rng, variant)
    state = OptimizerState.zeros_like(params)
    weights = config.class_weights or class_weights(train.y)
    steps_per_epoch = -(-len(train) // config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    chash = config.hash()

    best = CheckpointSet(config.topk)
    epochs = []
    for epoch in range(1, config.epochs + 1):
        params, state, stats = train_epoch(params, state, train, config, epoch, rng, total_steps, weights)
        val_eer = validate(params, val)
        best.add(Checkpoint(epoch, val_eer, params))
        epochs.append({
            "epoch": epoch,
            "l_c": stats.mean("l_c"),
            "l_z": stats.mean("l_z"),
            "l_d": stats.mean("l_d"),
            "lambda": stats.lambdas[-1],
            "val_eer": val_eer,
        })
        logger.info("%s seed=%d epoch %d: l_c=%.4f val_eer=%.4f",
                    variant.value, config.seed, epoch, epochs[-1]["l_c"], val_eer)

    averaged = average_checkpoints(best)
    final = evaluate_splits(averaged, dataset)

    for c in best:
        c.file = f"checkpoint_epoch{c.epoch:03d}.json"
    report = {
        "config": config.to_dict(),
        "config_hash": chash,
        "dataset_spec": asdict(dataset.spec),
        "class_weights": list(weights),
        "total_steps": total_steps,
        "epochs": epochs,
        "checkpoints": [{"epoch": c.epoch, "val_eer": c.val_eer, "file": c.file} for c in best],
        "final": final,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {"variant": variant.value, "config_hash": chash}
        for c in best:
            save_checkpoint(out / c.file, c.params, epoch=c.epoch, val_eer=c.val_eer, **meta)
        save_checkpoint(out / "averaged.json", averaged, epoch=None,
                        val_eer=final.get("val"), averaged_epochs=[c.epoch for c in best], **meta)
        for name, split in dataset.splits.items():
            if len(split):
                recs = records_from_arrays(predict_scores(averaged, split.x), split.y, prefix=name)
                write_scores(recs, out / f"scores_{name}.tsv")
        write_report(report, out / "report.json")
    return report


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _grid_job(args):
    config, dataset, out_dir = args
    return run_experiment(config, dataset, out_dir)


def run_ablation(dataset: Dataset, base: TrainConfig | None = None, seeds: Sequence[int] = (0, 1, 2),
                 variants: Sequence[Variant | str] = TABLE_ORDER, out_dir=None, workers: int = 1) -> dict:
    """Train every variant with every seed and tabulate mean EER per split.

    Returns ``{"splits", "rows": [{"variant", "label", "eer": {split: mean}, "avg"}], "runs"}``
    where ``avg`` is the mean over all splits that have both classes.
    """
    base = base or TrainConfig()
    jobs = []
    for v in variants:
        v = Variant(v)
        for s in seeds:
            sub = None if out_dir is None else Path(out_dir) / f"{v.value}_seed{s}"
            jobs.append((replace(base, variant=v.value, seed=int(s)), dataset, sub))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_grid_job, jobs))
    else:
        reports = [_grid_job(j) for j in jobs]

    splits = [name for name in SPLITS if name in reports[0]["final"]]
    rows = []
    runs = []
    for (cfg, _, _), rep in zip(jobs, reports):
        runs.append({"variant": cfg.variant, "seed": cfg.seed, "final": rep["final"]})
    for v in variants:
        v = Variant(v)
        mine = [r["final"] for r in runs if r["variant"] == v.value]
        eer = {name: float(np.mean([f[name] for f in mine])) for name in splits}
        rows.append({"variant": v.value, "label": v.label, "eer": eer,
                     "avg": float(np.mean(list(eer.values())))})
    summary = {"splits": splits, "seeds": list(seeds), "config": base.to_dict(), "rows": rows, "runs": runs}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_report(summary, Path(out_dir) / "ablation.json")
    return summary
