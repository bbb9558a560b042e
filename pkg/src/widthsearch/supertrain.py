"""Weight-shared supernet training over randomly sampled widths.

Every optimizer step draws one width (and, in complementary mode, its
complement) and trains the paths the assignment principle prescribes. Joint
mode backs both channel sides off a shared loss, which holds two activation
sets alive at once; iterative mode alternates one side per step at half the
activation footprint. Per-channel training counts and activation sizes are
tracked so fairness and memory claims can be audited after the fact.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import util
from .assign import UA, Principle
from .net import DivergenceError, GradBatch, MiniNet, SynthDataset, path_slices
from .space import SearchSpace, Width, complement, sample_uniform

BOTH_PATHS = "both_paths"
ITERATIVE = "iterative"


class LossLog:
    """Ring buffer of per-width training losses.

    Entries are dicts {step, width, loss, side}. The buffer may be bounded;
    top() is exact over whatever history is retained, which is all of it for
    the unbounded default.
    """

    def __init__(self, capacity: int | None = None):
        self._entries: deque = deque(maxlen=capacity)

    def record(self, step: int, width: Width, loss: float, side: str) -> None:
        self._entries.append({
            "step": int(step),
            "width": list(width),
            "loss": float(loss),
            "side": side,
        })

    def entries(self) -> list[dict]:
        return list(self._entries)

    def top(self, m: int) -> list[dict]:
        """The m smallest-loss entries, ties kept in arrival order."""
        return sorted(self._entries, key=lambda e: e["loss"])[:m]

    def __len__(self) -> int:
        return len(self._entries)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self._entries:
                fh.write(util.canonical_json(entry))
                fh.write("\n")

    @classmethod
    def load(cls, path: str, capacity: int | None = None) -> "LossLog":
        log = cls(capacity)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    e = json.loads(line)
                    log.record(e["step"], tuple(e["width"]), e["loss"], e["side"])
        return log


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 64
    lr: float = 0.1
    lr_min: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    principle: Principle = field(default_factory=Principle)
    complementary: bool = True
    update_mode: str = BOTH_PATHS
    # apply the width and its complement as two consecutive optimizer steps
    # instead of one summed half-weighted step
    complement_two_step: bool = False
    standardize: bool = False

    def __post_init__(self) -> None:
        if self.update_mode not in (BOTH_PATHS, ITERATIVE):
            raise ValueError(f"unknown update_mode {self.update_mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "lr_min": self.lr_min,
            "momentum": self.momentum,
            "seed": self.seed,
            "principle": self.principle.kind,
            "overlap_mode": self.principle.overlap_mode,
            "complementary": self.complementary,
            "update_mode": self.update_mode,
            "complement_two_step": self.complement_two_step,
            "standardize": self.standardize,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(
            epochs=obj["epochs"],
            batch_size=obj["batch_size"],
            lr=obj["lr"],
            lr_min=obj["lr_min"],
            momentum=obj["momentum"],
            seed=obj["seed"],
            principle=Principle(kind=obj["principle"],
                                overlap_mode=obj["overlap_mode"]),
            complementary=obj["complementary"],
            update_mode=obj["update_mode"],
            complement_two_step=obj.get("complement_two_step", False),
            standardize=obj["standardize"],
        )


@dataclass
class TrainResult:
    net: MiniNet
    losslog: LossLog
    channel_counts: list[np.ndarray]
    steps: int
    peak_activation: int
    mean_activation: float
    config: TrainConfig


def cosine_lr(step: int, total_steps: int, lr: float, lr_min: float) -> float:
    if total_steps <= 1:
        return lr
    frac = step / (total_steps - 1)
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * frac))


def train_supernet(space: SearchSpace, data: SynthDataset, config: TrainConfig,
                   log_capacity: int | None = None) -> TrainResult:
    principle = config.principle
    rng_init = util.substream(config.seed, "init")
    rng_width = util.substream(config.seed, "widths")
    rng_batch = util.substream(config.seed, "batches")

    net = MiniNet.supernet(space, principle, rng_init, standardize=config.standardize)
    counts = [np.zeros(principle.physical_width(spec), dtype=np.int64)
              for spec in space.layers]
    losslog = LossLog(log_capacity)
    batches_per_epoch = math.ceil(len(data.x_train) / config.batch_size)
    total_steps = config.epochs * batches_per_epoch

    step = 0
    peak_act = 0
    act_sum = 0
    for _ in range(config.epochs):
        for x, y in data.batches(config.batch_size, rng_batch):
            lr = cosine_lr(step, total_steps, config.lr, config.lr_min)
            width = sample_uniform(space, rng_width)
            widths = [width]
            if config.complementary:
                cbar = complement(width, space)
                # a self-complementary width trained twice at half weight is
                # the same update as training it once; skip the duplicate
                if cbar != width:
                    widths.append(cbar)

            step_peak = 0
            if config.complementary and config.complement_two_step:
                for w in widths:
                    grads = GradBatch(net)
                    _, act = _train_width(net, space, principle, w, x, y, grads,
                                          1.0, step, config, counts, losslog)
                    net.sgd_step(grads, lr, config.momentum)
                    step_peak = max(step_peak, act)
            else:
                grads = GradBatch(net)
                coef = 1.0 / len(widths)
                for w in widths:
                    _, act = _train_width(net, space, principle, w, x, y, grads,
                                          coef, step, config, counts, losslog)
                    step_peak = max(step_peak, act)
                net.sgd_step(grads, lr, config.momentum)

            peak_act = max(peak_act, step_peak)
            act_sum += step_peak
            step += 1

    return TrainResult(
        net=net,
        losslog=losslog,
        channel_counts=counts,
        steps=step,
        peak_activation=peak_act,
        mean_activation=act_sum / max(1, step),
        config=config,
    )


def _train_width(net: MiniNet, space: SearchSpace, principle: Principle,
                 width: Width, x: np.ndarray, y: np.ndarray, grads: GradBatch,
                 coef: float, step: int, config: TrainConfig,
                 counts: list[np.ndarray], losslog: LossLog) -> tuple[float, int]:
    """One sampled width's contribution to the current step.

    Returns (logged loss, activation floats simultaneously alive). In joint
    mode the two sides share one loss, so their activations coexist; in
    iterative mode (and for the unilateral principle) a single side runs:
    the first batch trains the left side, the next the right, and so on.
    """
    if principle.kind == UA:
        sides = ("left",)
    elif config.update_mode == BOTH_PATHS:
        sides = ("left", "right")
    else:
        sides = ("left",) if step % 2 == 0 else ("right",)

    losses = []
    act_alive = 0
    for side in sides:
        path = path_slices(space, principle, width, side)
        try:
            loss, act = net.forward_backward(x, y, path, into=grads,
                                             coef=coef / len(sides))
        except DivergenceError as err:
            raise DivergenceError(f"{err} (width {width}, side {side}, "
                                  f"step {step})") from None
        losses.append(loss)
        act_alive += act
        for i, (spec, c) in enumerate(zip(space.layers, width)):
            sl = principle.side_slices(spec, c)[0 if side == "left" else 1]
            counts[i][sl] += 1
    logged = float(np.mean(losses))
    losslog.record(step, width, logged, "both" if len(sides) == 2 else sides[0])
    return logged, act_alive


def tail_loss_stats(losslog: LossLog | list[dict], tail: int = 200,
                    blocks: int = 10) -> tuple[float, float]:
    """Mean and standard error of the trailing losses, estimated over block
    means to blunt the serial correlation of SGD noise."""
    entries = losslog.entries() if isinstance(losslog, LossLog) else list(losslog)
    losses = np.array([e["loss"] for e in entries[-tail:]], dtype=float)
    if len(losses) < blocks:
        blocks = max(1, len(losses))
    chunks = np.array_split(losses, blocks)
    means = np.array([c.mean() for c in chunks])
    if len(means) < 2:
        return float(means.mean()), float("inf")
    se = float(means.std(ddof=1) / np.sqrt(len(means)))
    return float(means.mean()), se
