"""1D residual classifier built for stable gradient-based attribution.

The architecture avoids pooling layers entirely: a strided convolutional
stem downsamples, residual blocks use replication padding so signal edges
never see artificial zeros, and global average pooling makes the head
agnostic to input length. The same topology serves 12-channel voltage
records and 3-channel trajectories.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import (
    ChannelMismatch,
    EmptySet,
    InvalidConfig,
    SchemaError,
    SingleClassData,
)
from .signals import CineTrajectory, EcgRecord

CHECKPOINT_VERSION = 1

Sample = tuple[np.ndarray, int]


@dataclass
class ModelConfig:
    """Topology of the classifier.

    `stem` is (out_channels, kernel, stride); each block is
    (channels, kernel, stride). All kernels must be odd so replication
    padding of (kernel - 1) // 2 preserves length at stride 1.
    """

    in_channels: int = 12
    stem: tuple[int, int, int] = (32, 7, 2)
    blocks: tuple[tuple[int, int, int], ...] = ((32, 5, 1), (64, 5, 2), (64, 3, 1))
    dropout_rate: float = 0.3
    num_classes: int = 2

    def __post_init__(self):
        self.stem = tuple(self.stem)
        self.blocks = tuple(tuple(b) for b in self.blocks)
        if self.in_channels not in (3, 12):
            raise InvalidConfig(f"in_channels must be 3 or 12, got {self.in_channels}")
        if self.num_classes != 2:
            raise InvalidConfig(f"num_classes must be 2, got {self.num_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for channels, kernel, stride in (self.stem, *self.blocks):
            if channels < 1:
                raise InvalidConfig(f"channel count must be positive, got {channels}")
            if kernel % 2 == 0 or kernel < 1:
                raise InvalidConfig(f"kernels must be odd, got {kernel}")
            if stride not in (1, 2):
                raise InvalidConfig(f"stride must be 1 or 2, got {stride}")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "stem": list(self.stem),
            "blocks": [list(b) for b in self.blocks],
            "dropout_rate": self.dropout_rate,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(in_channels=obj["in_channels"], stem=tuple(obj["stem"]),
                   blocks=tuple(tuple(b) for b in obj["blocks"]),
                   dropout_rate=obj["dropout_rate"], num_classes=obj["num_classes"])


@dataclass
class TrainReport:
    epochs_run: int
    best_val_loss: float
    seed: int
    test_accuracy: float | None = None
    test_macro_f1: float | None = None
    val_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.epochs_run < 1:
            raise InvalidConfig(f"epochs_run must be >= 1, got {self.epochs_run}")
        for name in ("test_accuracy", "test_macro_f1"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {value}")

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_val_loss": self.best_val_loss,
            "seed": self.seed,
            "test_accuracy": self.test_accuracy,
            "test_macro_f1": self.test_macro_f1,
        }


class Model:
    """Parameters plus frozen-vs-training forward passes.

    `params` maps names to float64 arrays; `bn_stats` holds the running
    statistics each normalization layer freezes at evaluation time.
    Evaluation-mode forwards are pure functions of (params, stats, input).

    Replication padding keeps every layer defined down to T = 1, so any
    input length >= 1 is accepted; shorter-than-kernel unpadded inputs are
    rejected by the convolution itself.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray],
                 bn_stats: dict[str, ad.RunningStats], dropout_seed: int = 0):
        self.config = config
        self.params = params
        self.bn_stats = bn_stats
        self.dropout_seed = dropout_seed
        self._dropout_counter = 0

    # -- forward ----------------------------------------------------------

    def _next_dropout_rng(self) -> np.random.Generator:
        self._dropout_counter += 1
        return np.random.default_rng([self.dropout_seed, self._dropout_counter])

    def forward(self, x: ad.Tensor, train: bool = False,
                leaves: dict[str, ad.Tensor] | None = None) -> ad.Tensor:
        """Build the logits graph for one [C, T] input tensor.

        When `leaves` is supplied it is filled with the parameter leaf
        tensors so the caller can read their gradients after backward().
        """
        if x.data.shape[0] != self.config.in_channels:
            raise ChannelMismatch(
                f"model expects {self.config.in_channels} channels, "
                f"got {x.data.shape[0]}")

        ts: dict[str, ad.Tensor] = {
            name: ad.Tensor(arr, requires_grad=train)
            for name, arr in self.params.items()
        }
        if leaves is not None:
            leaves.update(ts)

        def conv_bn(h, prefix, stride, padding, train_flag):
            h = ad.conv1d(h, ts[f"{prefix}.w"], stride=stride, padding=padding)
            return ad.batch_norm(h, ts[f"{prefix}.gamma"], ts[f"{prefix}.beta"],
                                 self.bn_stats[prefix], train=train_flag)

        _, stem_k, stem_s = self.config.stem
        h = conv_bn(x, "stem", stem_s, (stem_k - 1) // 2, train)
        h = ad.relu(h)

        in_ch = self.config.stem[0]
        for i, (channels, kernel, stride) in enumerate(self.config.blocks):
            pad = (kernel - 1) // 2
            main = conv_bn(h, f"block{i}.conv1", stride, pad, train)
            main = ad.relu(main)
            main = conv_bn(main, f"block{i}.conv2", 1, pad, train)
            if stride == 1 and in_ch == channels:
                shortcut = h
            else:
                shortcut = conv_bn(h, f"block{i}.shortcut", stride, 0, train)
            h = ad.relu(ad.add(main, shortcut))
            in_ch = channels

        h = ad.global_avg_pool(h)
        h = ad.dropout(h, self.config.dropout_rate, train, self._next_dropout_rng())
        return ad.dense(ts["head.w"], ts["head.b"], h)

    def forward_batched(self, x: ad.Tensor, train: bool = False,
                        leaves: dict[str, ad.Tensor] | None = None) -> ad.Tensor:
        """Logits for a stacked [N, C, T] batch; normalization statistics are
        shared across the batch so evaluation-time running stats describe the
        trained function."""
        if x.data.ndim != 3 or x.data.shape[1] != self.config.in_channels:
            raise ChannelMismatch(
                f"model expects [N, {self.config.in_channels}, T], got {x.data.shape}")

        ts: dict[str, ad.Tensor] = {
            name: ad.Tensor(arr, requires_grad=train)
            for name, arr in self.params.items()
        }
        if leaves is not None:
            leaves.update(ts)

        def conv_bn(h, prefix, stride, padding, train_flag):
            h = ad.conv1d_batched(h, ts[f"{prefix}.w"], stride=stride, padding=padding)
            return ad.batch_norm_batched(h, ts[f"{prefix}.gamma"], ts[f"{prefix}.beta"],
                                         self.bn_stats[prefix], train=train_flag)

        _, stem_k, stem_s = self.config.stem
        h = conv_bn(x, "stem", stem_s, (stem_k - 1) // 2, train)
        h = ad.relu(h)

        in_ch = self.config.stem[0]
        for i, (channels, kernel, stride) in enumerate(self.config.blocks):
            pad = (kernel - 1) // 2
            main = conv_bn(h, f"block{i}.conv1", stride, pad, train)
            main = ad.relu(main)
            main = conv_bn(main, f"block{i}.conv2", 1, pad, train)
            if stride == 1 and in_ch == channels:
                shortcut = h
            else:
                shortcut = conv_bn(h, f"block{i}.shortcut", stride, 0, train)
            h = ad.relu(ad.add(main, shortcut))
            in_ch = channels

        h = ad.global_avg_pool_batched(h)
        h = ad.dropout(h, self.config.dropout_rate, train, self._next_dropout_rng())
        return ad.dense_batched(ts["head.w"], ts["head.b"], h)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for a [C, T] array (evaluation mode)."""
        logits = self.forward(ad.Tensor(x))
        return _softmax_np(logits.data)

    def class_probability(self, x: np.ndarray, k: int) -> float:
        return float(self.predict(x)[k])

    def class_gradient(self, x: np.ndarray, k: int) -> np.ndarray:
        """d p_k / d x at the given input, evaluation mode."""
        xt = ad.Tensor(x, requires_grad=True)
        prob = ad.pick(ad.softmax(self.forward(xt)), k)
        (grad,) = ad.backward(prob, wrt=[xt])
        return grad

    def snapshot(self) -> tuple[dict, dict]:
        params = {k: v.copy() for k, v in self.params.items()}
        stats = copy.deepcopy(self.bn_stats)
        return params, stats

    def restore(self, snap: tuple[dict, dict]) -> None:
        params, stats = snap
        self.params = {k: v.copy() for k, v in params.items()}
        self.bn_stats = copy.deepcopy(stats)


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def build_model(config: ModelConfig, seed: int) -> Model:
    """Initialize all parameters with scaled-uniform fan-in draws."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    bn_stats: dict[str, ad.RunningStats] = {}

    def add_conv_bn(prefix: str, c_in: int, c_out: int, kernel: int):
        bound = 1.0 / np.sqrt(c_in * kernel)
        params[f"{prefix}.w"] = rng.uniform(-bound, bound, size=(c_out, c_in, kernel))
        params[f"{prefix}.gamma"] = np.ones(c_out)
        params[f"{prefix}.beta"] = np.zeros(c_out)
        bn_stats[prefix] = ad.RunningStats.initial(c_out)

    stem_c, stem_k, _ = config.stem
    add_conv_bn("stem", config.in_channels, stem_c, stem_k)
    in_ch = stem_c
    for i, (channels, kernel, stride) in enumerate(config.blocks):
        add_conv_bn(f"block{i}.conv1", in_ch, channels, kernel)
        add_conv_bn(f"block{i}.conv2", channels, channels, kernel)
        if stride != 1 or in_ch != channels:
            add_conv_bn(f"block{i}.shortcut", in_ch, channels, 1)
        in_ch = channels

    bound = 1.0 / np.sqrt(in_ch)
    params["head.w"] = rng.uniform(-bound, bound, size=(config.num_classes, in_ch))
    params["head.b"] = np.zeros(config.num_classes)
    return Model(config, params, bn_stats, dropout_seed=seed)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _stratified_holdout(labels: list[int], frac: float,
                        rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Split indices into (train, holdout) keeping class mix; >= 1 per class
    in the holdout."""
    holdout: list[int] = []
    train: list[int] = []
    for cls in sorted(set(labels)):
        idx = [i for i, lab in enumerate(labels) if lab == cls]
        rng.shuffle(idx)
        n_hold = max(1, int(round(frac * len(idx))))
        holdout.extend(idx[:n_hold])
        train.extend(idx[n_hold:])
    return sorted(train), sorted(holdout)


def _equal_length_groups(indices, samples) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for i in indices:
        groups.setdefault(samples[int(i)][0].shape[1], []).append(int(i))
    return list(groups.values())


def _mean_loss(model: Model, samples: list[Sample]) -> float:
    total = 0.0
    for group in _equal_length_groups(range(len(samples)), samples):
        xs = np.stack([samples[i][0] for i in group])
        labels = np.asarray([samples[i][1] for i in group])
        logits = model.forward_batched(ad.Tensor(xs))
        loss = ad.softmax_cross_entropy_mean(logits, labels)
        total += float(loss.data) * len(group)
    return total / len(samples)


def train(model: Model, train_set: list[Sample], seed: int,
          max_epochs: int = 60, patience: int = 7, batch_size: int = 32,
          lr: float = 1e-3, val_frac: float = 0.15,
          test_set: list[Sample] | None = None) -> TrainReport:
    """Adam/cross-entropy training with an inner stratified validation
    holdout and early stopping on validation loss.

    Stops once `patience` consecutive epochs fail to improve the best
    validation loss, then restores the best-epoch parameters. Fully
    deterministic for fixed (model init, data order, seed).
    """
    if not train_set:
        raise EmptySet("train_set is empty")
    labels = [int(lab) for _, lab in train_set]
    if len(set(labels)) < 2:
        raise SingleClassData("training data holds a single class")

    split_rng = np.random.default_rng([seed, 1])
    train_idx, val_idx = _stratified_holdout(labels, val_frac, split_rng)
    inner_train = [train_set[i] for i in train_idx]
    inner_val = [train_set[i] for i in val_idx]

    epoch_rng = np.random.default_rng([seed, 2])
    model.dropout_seed = seed
    model._dropout_counter = 0
    state = ad.AdamState()

    best_val = float("inf")
    best_snap = model.snapshot()
    bad_epochs = 0
    epochs_run = 0
    val_losses: list[float] = []

    for _ in range(max_epochs):
        epochs_run += 1
        order = epoch_rng.permutation(len(inner_train))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            grad_acc: dict[str, np.ndarray] = {}
            weight_total = 0
            for group in _equal_length_groups(batch, inner_train):
                xs = np.stack([inner_train[i][0] for i in group])
                labels = np.asarray([inner_train[i][1] for i in group])
                leaves: dict[str, ad.Tensor] = {}
                logits = model.forward_batched(ad.Tensor(xs), train=True, leaves=leaves)
                loss = ad.softmax_cross_entropy_mean(logits, labels)
                ad.backward(loss)
                weight_total += len(group)
                for name, leaf in leaves.items():
                    if leaf.grad is None:
                        continue
                    scaled = leaf.grad * len(group)
                    if name in grad_acc:
                        grad_acc[name] += scaled
                    else:
                        grad_acc[name] = scaled
            for name in grad_acc:
                grad_acc[name] /= weight_total
            ad.adam_step(model.params, grad_acc, state, lr=lr)

        val_loss = _mean_loss(model, inner_val)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_snap = model.snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > patience:
                break

    model.restore(best_snap)
    report = TrainReport(epochs_run=epochs_run, best_val_loss=best_val, seed=seed,
                         val_losses=val_losses)
    if test_set is not None:
        accuracy, macro_f1, _ = evaluate(model, test_set)
        report.test_accuracy = accuracy
        report.test_macro_f1 = macro_f1
    return report


# ---------------------------------------------------------------------------
# inference and metrics
# ---------------------------------------------------------------------------

def _input_channels(record) -> np.ndarray:
    if isinstance(record, EcgRecord):
        return record.leads
    if isinstance(record, CineTrajectory):
        return record.path
    return np.asarray(record, dtype=np.float64)


def predict_proba(model: Model, record) -> tuple[float, float]:
    """(p_normal, p_abnormal) for a record, trajectory, or raw [C, T] array."""
    x = _input_channels(record)
    if x.ndim != 2 or x.shape[0] != model.config.in_channels:
        raise ChannelMismatch(
            f"model expects {model.config.in_channels} channels, got "
            f"{x.shape[0] if x.ndim == 2 else x.shape}")
    probs = model.predict(x)
    return float(probs[0]), float(probs[1])


def evaluate(model: Model, test_set: list[Sample]) -> tuple[float, float, np.ndarray]:
    """(accuracy, macro F1, confusion[true][pred]) over a labeled set."""
    if not test_set:
        raise EmptySet("test_set is empty")
    confusion = np.zeros((2, 2), dtype=np.int64)
    for x, label in test_set:
        pred = int(np.argmax(model.predict(np.asarray(x, dtype=np.float64))))
        confusion[int(label), pred] += 1
    accuracy = float(np.trace(confusion)) / float(confusion.sum())

    f1s = []
    for cls in (0, 1):
        tp = confusion[cls, cls]
        fp = confusion[1 - cls, cls]
        fn = confusion[cls, 1 - cls]
        denom = 2 * tp + fp + fn
        f1s.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return accuracy, float(np.mean(f1s)), confusion


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def checkpoint_manifest(model: Model) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "dropout_seed": model.dropout_seed,
        "tensors": [
            {"name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()}
            for name, arr in sorted(model.params.items())
        ],
        "bn_stats": [
            {"name": name, "mean": st.mean.tolist(), "var": st.var.tolist()}
            for name, st in sorted(model.bn_stats.items())
        ],
    }


def save_checkpoint(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(checkpoint_manifest(model)) + "\n",
                          encoding="utf-8")


def load_checkpoint(path: str | Path) -> Model:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("version", "config", "tensors", "bn_stats"):
        if key not in obj:
            raise SchemaError(key)
    if obj["version"] != CHECKPOINT_VERSION:
        raise InvalidConfig(f"unsupported checkpoint version {obj['version']}")
    config = ModelConfig.from_dict(obj["config"])
    params = {
        entry["name"]: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for entry in obj["tensors"]
    }
    bn_stats = {
        entry["name"]: ad.RunningStats(mean=np.asarray(entry["mean"], dtype=np.float64),
                                       var=np.asarray(entry["var"], dtype=np.float64))
        for entry in obj["bn_stats"]
    }
    return Model(config, params, bn_stats, dropout_seed=obj.get("dropout_seed", 0))


def model_digest(model: Model) -> str:
    """Content hash of parameters and statistics, for result caching."""
    payload = json.dumps(checkpoint_manifest(model), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------

DEFAULT_SEARCH_SPACE: dict[str, tuple] = {
    "stem": ((16, 7, 2), (32, 7, 2), (32, 5, 2)),
    "blocks": (
        ((32, 5, 1), (64, 5, 2), (64, 3, 1)),
        ((16, 5, 1), (32, 5, 2)),
        ((32, 3, 1), (32, 3, 2), (64, 3, 1)),
    ),
    "dropout_rate": (0.1, 0.3, 0.5),
    "lr": (3e-4, 1e-3, 3e-3),
    "batch_size": (16, 32),
}


def random_search(train_set: list[Sample], in_channels: int, n_trials: int,
                  seed: int, space: dict | None = None, max_epochs: int = 20,
                  patience: int = 3) -> tuple[Model, TrainReport, list[dict]]:
    """Seeded random search over a small documented grid.

    Trains each sampled configuration and returns the model with the best
    validation loss plus a per-trial log.
    """
    space = space or DEFAULT_SEARCH_SPACE
    rng = np.random.default_rng(seed)
    best: tuple[float, Model, TrainReport] | None = None
    trials: list[dict] = []
    for trial in range(n_trials):
        draw = {key: options[rng.integers(len(options))]
                for key, options in space.items()}
        config = ModelConfig(in_channels=in_channels, stem=draw["stem"],
                             blocks=draw["blocks"], dropout_rate=draw["dropout_rate"])
        model = build_model(config, seed=seed + trial + 1)
        report = train(model, train_set, seed=seed + trial + 1,
                       max_epochs=max_epochs, patience=patience,
                       batch_size=int(draw["batch_size"]), lr=float(draw["lr"]))
        trials.append({"trial": trial, "config": config.to_dict(),
                       "lr": float(draw["lr"]), "batch_size": int(draw["batch_size"]),
                       "best_val_loss": report.best_val_loss})
        if best is None or report.best_val_loss < best[0]:
            best = (report.best_val_loss, model, report)
    assert best is not None
    return best[1], best[2], trials
