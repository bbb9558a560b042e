"""Ground-truth benchmark tables and ranking-fidelity scoring.

A benchmark table holds the from-scratch validation accuracy of every width
in a small space, averaged over a few seeds. Scoring a trained supernet
against the table asks one question: does the shared-weight proxy rank
widths the way independent retraining does? Agreement is reported as
Pearson, Spearman, and Kendall coefficients, all implemented here against
their textbook definitions.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import util
from .assign import Principle
from .evaluation import evaluate_widths, train_standalone
from .net import MiniNet, SynthDataset
from .space import FlopsTable, SearchSpace, Width, sample_uniform
from .supertrain import TrainConfig

MAX_TABLE_WIDTHS = 4096


# correlation ----------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    kendall_tau: float

    def to_json(self) -> dict:
        return {
            "pearson": self.pearson,
            "spearman": self.spearman,
            "kendall_tau": self.kendall_tau,
        }


def _as_clean_pair(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(
            f"correlation needs equal-length vectors, got {a.shape} vs {b.shape}"
        )
    if len(a) < 2:
        raise ValueError("correlation needs at least two points")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("correlation inputs must be finite")
    return a, b


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a, b = _as_clean_pair(x, y)
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        raise ValueError("pearson undefined for a constant vector")
    return float(a @ b) / denom


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    a = np.asarray(x, dtype=float)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    a, b = _as_clean_pair(x, y)
    return pearson(average_ranks(a), average_ranks(b))


def kendall(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected Kendall coefficient, O(n^2) pair counting in chunks."""
    a, b = _as_clean_pair(x, y)
    n = len(a)
    concordant_minus_discordant = 0
    for lo in range(0, n, 256):
        hi = min(lo + 256, n)
        da = np.sign(a[lo:hi, None] - a[None, :])
        db = np.sign(b[lo:hi, None] - b[None, :])
        prod = (da * db).astype(np.int64)
        # count each unordered pair once: keep only columns past the row
        cols = np.arange(n)[None, :]
        rows = np.arange(lo, hi)[:, None]
        prod[cols <= rows] = 0
        concordant_minus_discordant += int(prod.sum())

    def tie_pairs(v: np.ndarray) -> int:
        _, counts = np.unique(v, return_counts=True)
        return int((counts * (counts - 1) // 2).sum())

    n0 = n * (n - 1) // 2
    n1 = tie_pairs(a)
    n2 = tie_pairs(b)
    if n0 == n1 or n0 == n2:
        raise ValueError("kendall undefined for a constant vector")
    return concordant_minus_discordant / math.sqrt(float(n0 - n1) * float(n0 - n2))


def correlate(predicted: Sequence[float], truth: Sequence[float]) -> CorrelationReport:
    return CorrelationReport(
        pearson=pearson(predicted, truth),
        spearman=spearman(predicted, truth),
        kendall_tau=kendall(predicted, truth),
    )


# benchmark tables -----------------------------------------------------------


def params_count(space: SearchSpace, width: Width) -> int:
    """Exact parameter tally of a standalone net at this width."""
    w = space.validate(width)
    chain = (space.input_dim,) + w + (space.output_dim,)
    return sum(co * ci + co for ci, co in zip(chain[:-1], chain[1:]))


@dataclass
class BenchmarkTable:
    """Retrained ground truth for every width of a small space."""

    header: dict
    records: list[dict]

    def widths(self) -> list[Width]:
        return [tuple(r["widths"]) for r in self.records]

    def acc_means(self) -> np.ndarray:
        return np.array([r["acc_mean"] for r in self.records])

    def flops_values(self) -> np.ndarray:
        return np.array([r["flops"] for r in self.records])

    def lookup(self, width: Width) -> dict:
        for r in self.records:
            if tuple(r["widths"]) == tuple(width):
                return r
        raise KeyError(f"width {width} not in benchmark table")

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(util.canonical_json({"header": self.header}))
            fh.write("\n")
            for record in self.records:
                fh.write(util.canonical_json(record))
                fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "BenchmarkTable":
        with open(path, encoding="utf-8") as fh:
            lines = [line.strip() for line in fh if line.strip()]
        if not lines:
            raise ValueError(f"{path}: empty benchmark file")
        first = json.loads(lines[0])
        if "header" not in first:
            raise ValueError(f"{path}: first line must be the header object")
        records = [json.loads(line) for line in lines[1:]]
        for r in records:
            missing = {"widths", "acc_mean", "acc_std", "flops", "params"} - set(r)
            if missing:
                raise ValueError(f"{path}: record missing fields {sorted(missing)}")
        return cls(header=first["header"], records=records)

    def to_csv(self, path: str) -> None:
        """Flat export for plotting: one row per width."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("widths,acc_mean,acc_std,flops,params\n")
            for r in self.records:
                widths = " ".join(str(c) for c in r["widths"])
                fh.write(f"{widths},{r['acc_mean']!r},{r['acc_std']!r},"
                         f"{r['flops']},{r['params']}\n")


def generate_benchmark(space: SearchSpace, data: SynthDataset, table: FlopsTable,
                       train_config: TrainConfig, num_seeds: int = 3,
                       family: str = "toy-dense") -> BenchmarkTable:
    """Retrain every width of the space `num_seeds` times from scratch.

    Guarded to small spaces: the point is an exhaustive, reusable ground
    truth, not a big training campaign. (width, seed) jobs are independent
    and map across the worker pool; assembly is an ordered reduce.
    """
    size = space.size()
    if size > MAX_TABLE_WIDTHS:
        raise ValueError(
            f"space has {size} widths; benchmark generation is capped at "
            f"{MAX_TABLE_WIDTHS}"
        )
    if num_seeds < 1:
        raise ValueError("num_seeds must be >= 1")
    widths = sorted(space.enumerate_widths())
    jobs = [(w, k) for w in widths for k in range(num_seeds)]

    def one_job(job: tuple[Width, int]) -> float:
        width, k = job
        seed = util.derive_seed(train_config.seed,
                                f"bench:{k}:{','.join(map(str, width))}")
        cfg = TrainConfig(
            epochs=train_config.epochs,
            batch_size=train_config.batch_size,
            lr=train_config.lr,
            lr_min=train_config.lr_min,
            momentum=train_config.momentum,
            seed=seed,
            principle=train_config.principle,
            complementary=train_config.complementary,
            update_mode=train_config.update_mode,
            standardize=train_config.standardize,
        )
        _, acc = train_standalone(space, width, data, cfg)
        return acc

    accs = util.ordered_map(one_job, jobs)
    records = []
    for i, width in enumerate(widths):
        arr = np.array(accs[i * num_seeds:(i + 1) * num_seeds])
        records.append({
            "widths": list(width),
            "acc_mean": float(arr.mean()),
            "acc_std": float(arr.std(ddof=0)),
            "flops": table.total(width),
            "params": params_count(space, width),
        })
    header = {
        "family": family,
        "space": space.to_json(),
        "num_seeds": num_seeds,
        "num_widths": size,
        "train": train_config.to_json(),
    }
    return BenchmarkTable(header=header, records=records)


@dataclass
class ScoreResult:
    """Supernet predictions against a benchmark table."""

    widths: list[Width]
    predicted: list[float]
    truth: list[float]
    correlation: CorrelationReport
    flops_correlation: CorrelationReport

    def to_json(self) -> dict:
        return {
            "widths": [list(w) for w in self.widths],
            "predicted": self.predicted,
            "truth": self.truth,
            "correlation": self.correlation.to_json(),
            "flops_correlation": self.flops_correlation.to_json(),
        }


def score_supernet(net: MiniNet, space: SearchSpace, principle: Principle,
                   bench: BenchmarkTable, data: SynthDataset,
                   table: FlopsTable) -> ScoreResult:
    """Rank every benchmark width with the supernet and compare to truth.

    Also reports how well FLOPs alone predicts the ground truth, the usual
    sanity yardstick for one-shot proxies.
    """
    bench_space = SearchSpace.from_json(bench.header["space"])
    if bench_space != space:
        raise ValueError("benchmark table was generated for a different space")
    widths = bench.widths()
    reports = evaluate_widths(net, space, principle, widths,
                              data.x_val, data.y_val, table)
    predicted = [r.acc_mean for r in reports]
    truth = bench.acc_means().tolist()
    return ScoreResult(
        widths=widths,
        predicted=predicted,
        truth=truth,
        correlation=correlate(predicted, truth),
        flops_correlation=correlate(bench.flops_values().tolist(), truth),
    )


# synthetic oracle -----------------------------------------------------------


def _hashed_noise(width: Width, seed: int, scale: float) -> float:
    payload = f"{seed}|{','.join(map(str, width))}".encode("utf-8")
    raw = int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")
    return scale * (2.0 * (raw / 2**64) - 1.0)


def synthetic_oracle(space: SearchSpace, seed: int = 0,
                     noise: float = 0.004) -> Callable[[Width], float]:
    """Accuracy-like fitness, concave and increasing in every layer's width.

    Harness-only stand-in for retrained accuracy: an affine map of
    sum_l beta_l * log(width_l) into [0.5, 0.95], plus deterministic
    per-width hashed noise so ties are rare and results are process
    independent.
    """
    rng = util.substream(seed, "oracle-weights")
    betas = rng.uniform(0.5, 1.5, size=space.num_layers)
    lo = sum(b * math.log(spec.grid[0]) for b, spec in zip(betas, space.layers))
    hi = sum(b * math.log(spec.max_width) for b, spec in zip(betas, space.layers))
    span = max(hi - lo, 1e-12)

    def fitness(width: Width) -> float:
        w = space.validate(width)
        raw = sum(b * math.log(c) for b, c in zip(betas, w))
        base = 0.5 + 0.45 * (raw - lo) / span
        return base + _hashed_noise(w, seed, noise)

    return fitness


def synthetic_losslog(space: SearchSpace, fitness: Callable[[Width], float],
                      n: int = 2000, seed: int = 0) -> list[dict]:
    """Training-log shaped samples with loss = 1 - fitness, for exercising
    the prior fit without a real supernet run."""
    rng = util.substream(seed, "oracle-losslog")
    log = []
    for step in range(n):
        w = sample_uniform(space, rng)
        log.append({
            "step": step,
            "width": list(w),
            "loss": 1.0 - float(fitness(w)),
            "side": "both",
        })
    return log
