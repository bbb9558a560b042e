"""Scoring sampled widths on held-out data, and retraining them standalone.

A bilateral supernet gives every width two realizations (left and right
channel sides); its score is the plain average of the two. Evaluation runs
the whole validation set as a single batch so feature standardization sees
stable statistics, and never mutates the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import util
from .assign import UA, Principle
from .net import (GradBatch, MiniNet, SynthDataset, accuracy, path_slices,
                  softmax_cross_entropy)
from .space import FlopsTable, SearchSpace, Width
from .supertrain import TrainConfig, cosine_lr


@dataclass(frozen=True)
class EvalReport:
    width: Width
    acc_left: float
    acc_right: float | None
    acc_mean: float
    loss_left: float
    loss_right: float | None
    loss_mean: float
    flops: int

    def to_json(self) -> dict:
        return {
            "width": list(self.width),
            "acc_left": self.acc_left,
            "acc_right": self.acc_right,
            "acc_mean": self.acc_mean,
            "loss_left": self.loss_left,
            "loss_right": self.loss_right,
            "loss_mean": self.loss_mean,
            "flops": self.flops,
        }


def _score_path(net: MiniNet, space: SearchSpace, principle: Principle,
                width: Width, side: str, x: np.ndarray,
                y: np.ndarray) -> tuple[float, float]:
    logits = net.forward(x, path_slices(space, principle, width, side))
    loss, _ = softmax_cross_entropy(logits, y)
    return accuracy(logits, y), loss


def evaluate(net: MiniNet, space: SearchSpace, principle: Principle,
             width: Width, x: np.ndarray, y: np.ndarray,
             table: FlopsTable) -> EvalReport:
    """Score one width on (x, y); bilateral principles average both sides."""
    w = space.validate(width)
    acc_l, loss_l = _score_path(net, space, principle, w, "left", x, y)
    if principle.kind == UA:
        return EvalReport(w, acc_l, None, acc_l, loss_l, None, loss_l,
                          table.total(w))
    acc_r, loss_r = _score_path(net, space, principle, w, "right", x, y)
    return EvalReport(
        width=w,
        acc_left=acc_l,
        acc_right=acc_r,
        acc_mean=0.5 * (acc_l + acc_r),
        loss_left=loss_l,
        loss_right=loss_r,
        loss_mean=0.5 * (loss_l + loss_r),
        flops=table.total(w),
    )


def evaluate_widths(net: MiniNet, space: SearchSpace, principle: Principle,
                    widths: Sequence[Width], x: np.ndarray, y: np.ndarray,
                    table: FlopsTable) -> list[EvalReport]:
    """Score many widths; forward passes only read weights, so this maps
    across the worker pool when one is configured."""
    def one(w: Width) -> EvalReport:
        return evaluate(net, space, principle, w, x, y, table)
    return util.ordered_map(one, list(widths))


def report_sort_key(report: EvalReport) -> tuple:
    """Deterministic ranking: accuracy down, then loss, FLOPs, width."""
    return (-report.acc_mean, report.loss_mean, report.flops, report.width)


def rank_reports(reports: Sequence[EvalReport]) -> list[EvalReport]:
    return sorted(reports, key=report_sort_key)


def train_standalone(space: SearchSpace, width: Width, data: SynthDataset,
                     config: TrainConfig) -> tuple[MiniNet, float]:
    """Train a single width from scratch; returns (net, validation accuracy).

    Mirrors the supernet optimizer (momentum SGD under a cosine schedule)
    and draws init and batch order from the same named substreams, so on a
    one-width space supernet training reduces to this bit-exactly.
    """
    w = space.validate(width)
    rng_init = util.substream(config.seed, "init")
    rng_batch = util.substream(config.seed, "batches")
    net = MiniNet.standalone(space, w, rng_init, standardize=config.standardize)
    path = net.full_path()

    batches_per_epoch = math.ceil(len(data.x_train) / config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    step = 0
    for _ in range(config.epochs):
        for x, y in data.batches(config.batch_size, rng_batch):
            grads = GradBatch(net)
            net.forward_backward(x, y, path, into=grads)
            net.sgd_step(grads, cosine_lr(step, total_steps, config.lr,
                                          config.lr_min), config.momentum)
            step += 1
    logits = net.forward(data.x_val, path)
    return net, accuracy(logits, data.y_val)


def retrain_from_scratch(space: SearchSpace, width: Width, config: TrainConfig,
                         data: SynthDataset) -> float:
    """Fresh seeded initialization, full training run, validation accuracy."""
    _, acc = train_standalone(space, width, data, config)
    return acc
