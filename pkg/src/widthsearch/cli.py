"""Command-line entry point orchestrating the width-search pipeline.

One verb per module: `space`, `train`, `audit`, `prior`, `search`, `eval`,
`bench`, `run`. Commands that share an output directory share one run
identity: a hash over the space, dataset, training configuration, and root
seed. Every machine-readable artifact carries that hash, and a consumer
that is handed an artifact from a different run refuses it. Search-stage
settings (budget, method, evolution parameters) are recorded in artifacts
but deliberately excluded from the identity, so one trained supernet can
serve many searches.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import bench as bench_mod
from . import evo as evo_mod
from . import plots, prior as prior_mod, util
from .assign import BC, BCV2, EXACT_FAIR, PAPER_LITERAL, UA, Principle, audit_csv, audit_report
from .evaluation import evaluate, retrain_from_scratch
from .net import (MiniNet, SynthDataset, gaussian_blobs, load_checkpoint,
                  save_checkpoint, two_spirals)
from .space import (FlopsTable, SearchSpace, LayerSpec, load_space, save_flops,
                    save_space)
from .supertrain import (BOTH_PATHS, ITERATIVE, LossLog, TrainConfig,
                         tail_loss_stats, train_supernet)

METHODS = ("evo", "evo-prior", "greedy", "random")


class PipelineError(RuntimeError):
    """A pipeline stage failed; partial artifacts stay on disk."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# configuration --------------------------------------------------------------


@dataclass(frozen=True)
class DataConfig:
    """Synthetic dataset recipe; dimensions follow the search space."""

    kind: str = "blobs"  # or "spirals"
    n_train: int = 2048
    n_val: int = 512
    noise: float = 0.08

    def __post_init__(self) -> None:
        if self.kind not in ("blobs", "spirals"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n_train < 1 or self.n_val < 1:
            raise ValueError("n_train and n_val must be >= 1")

    def to_json(self) -> dict:
        return {"kind": self.kind, "n_train": self.n_train,
                "n_val": self.n_val, "noise": self.noise}

    @classmethod
    def from_json(cls, obj: dict) -> "DataConfig":
        return cls(**obj)


def make_dataset(space: SearchSpace, data: DataConfig, seed: int) -> SynthDataset:
    """Regenerate the run's dataset from its seed; datasets are never stored."""
    rng = util.substream(seed, "data")
    if data.kind == "spirals":
        if space.input_dim != 2:
            raise ValueError("spirals data needs input_dim == 2")
        return two_spirals(space.output_dim, data.n_train, data.n_val, rng,
                           noise=data.noise)
    return gaussian_blobs(space.input_dim, space.output_dim,
                          data.n_train, data.n_val, rng)


@dataclass
class RunConfig:
    """Everything a pipeline run needs; serialized so runs are re-creatable."""

    space: SearchSpace
    data: DataConfig
    train: TrainConfig
    evo: evo_mod.EvoConfig
    budget: str = "0.5x"
    method: str = "evo"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")

    def identity_hash(self) -> str:
        """Run identity: what determines the supernet and its logs.

        Search-stage settings are excluded on purpose; see module docstring.
        """
        return util.config_hash({
            "space": self.space.to_json(),
            "data": self.data.to_json(),
            "train": self.train.to_json(),
            "seed": self.seed,
        })

    def budget_flops(self, table: FlopsTable) -> int:
        return parse_budget(self.budget, table)

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "data": self.data.to_json(),
            "train": self.train.to_json(),
            "evo": self.evo.to_json(),
            "budget": self.budget,
            "method": self.method,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        return cls(
            space=SearchSpace.from_json(obj["space"]),
            data=DataConfig.from_json(obj["data"]),
            train=TrainConfig.from_json(obj["train"]),
            evo=evo_mod.EvoConfig.from_json(obj["evo"]),
            budget=obj["budget"],
            method=obj["method"],
            seed=obj["seed"],
        )


def parse_budget(raw: str, table: FlopsTable) -> int:
    """Either absolute FLOPs ("120000") or a fraction of full width ("0.5x")."""
    text = str(raw).strip()
    try:
        if text.endswith("x"):
            frac = float(text[:-1])
            if frac <= 0:
                raise ValueError
            return int(math.floor(frac * table.max_total()))
        value = int(text)
        if value <= 0:
            raise ValueError
        return value
    except ValueError:
        raise ValueError(
            f"budget must be a positive FLOPs count or a fraction like '0.5x', "
            f"got {raw!r}"
        ) from None


# artifact plumbing ----------------------------------------------------------


def _write_json(path: str, payload: dict, config_hash: str) -> None:
    payload = dict(payload)
    payload["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(util.canonical_json(payload))
        fh.write("\n")


def _read_json(path: str, expected_hash: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    util.check_artifact_hash(payload.get("config_hash"), expected_hash, path)
    return payload


def _init_run_dir(out: str, config: RunConfig) -> str:
    """Create or join a run directory; returns the identity hash.

    A directory initialized under a different identity is refused rather
    than silently mixed.
    """
    os.makedirs(out, exist_ok=True)
    h = config.identity_hash()
    cfg_path = os.path.join(out, "config.json")
    if os.path.exists(cfg_path):
        with open(cfg_path, encoding="utf-8") as fh:
            existing = json.load(fh)
        if existing.get("config_hash") != h:
            raise ValueError(
                f"{out}: directory belongs to run {existing.get('config_hash')!r}, "
                f"this invocation hashes to {h!r}; use a fresh --out"
            )
    _write_json(cfg_path, config.to_json(), h)
    return h


def _load_run_dir(out: str) -> tuple[RunConfig, str]:
    cfg_path = os.path.join(out, "config.json")
    with open(cfg_path, encoding="utf-8") as fh:
        payload = json.load(fh)
    config = RunConfig.from_json(payload)
    h = config.identity_hash()
    util.check_artifact_hash(payload.get("config_hash"), h, cfg_path)
    return config, h


def _save_losslog(log: LossLog, path: str, config_hash: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(util.canonical_json({"config_hash": config_hash}))
        fh.write("\n")
        for entry in log.entries():
            fh.write(util.canonical_json(entry))
            fh.write("\n")


def _load_losslog(path: str, expected_hash: str) -> LossLog:
    log = LossLog()
    found = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "width" in obj:
                log.record(obj["step"], tuple(obj["width"]), obj["loss"], obj["side"])
            else:
                found = obj.get("config_hash")
    util.check_artifact_hash(found, expected_hash, path)
    return log


def _history_csv(history: list[dict], path: str, config_hash: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write("iteration,best_fitness,mean_fitness,best_width\n")
        for row in history:
            width = " ".join(str(c) for c in row["best_width"])
            fh.write(f"{row['iteration']},{row['best_fitness']!r},"
                     f"{row['mean_fitness']!r},{width}\n")


# stages ---------------------------------------------------------------------


def _stage_space(out: str, config: RunConfig, h: str) -> FlopsTable:
    table = FlopsTable.from_dense(config.space)
    space_payload = config.space.to_json()
    _write_json(os.path.join(out, "space.json"), space_payload, h)
    flops_payload = table.to_json()
    _write_json(os.path.join(out, "flops.json"), flops_payload, h)
    return table

def _stage_train(out: str, config: RunConfig, h: str,
                 data: SynthDataset) -> MiniNet:
    result = train_supernet(config.space, data, config.train)
    _save_losslog(result.losslog, os.path.join(out, "losslog.jsonl"), h)
    save_checkpoint(result.net, os.path.join(out, "supernet.ckpt"), h)
    loss_mean, loss_se = tail_loss_stats(result.losslog)
    _write_json(os.path.join(out, "train_meta.json"), {
        "steps": result.steps,
        "peak_activation": result.peak_activation,
        "mean_activation": result.mean_activation,
        "channel_counts": [c.tolist() for c in result.channel_counts],
        "tail_loss_mean": loss_mean,
        "tail_loss_se": loss_se,
    }, h)
    plots.plot_loss_curve(result.losslog.entries(),
                          os.path.join(out, "loss_curve.png"))
    return result.net


def _stage_audit(out: str, config: RunConfig, h: str) -> None:
    report = audit_report(config.train.principle, config.space)
    _write_json(os.path.join(out, "audit.json"), report, h)
    with open(os.path.join(out, "audit.csv"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={h}\n")
        fh.write("layer,channel,count\n")
        for layer in report["layers"]:
            for ch, n in enumerate(layer["counts"], start=1):
                fh.write(f"{layer['layer']},{ch},{n}\n")
    plots.plot_channel_audit(report, os.path.join(out, "audit.png"))


def _stage_prior(out: str, config: RunConfig, h: str, table: FlopsTable,
                 budget: int, losslog: LossLog) -> list:
    errors = prior_mod.build_error_table(losslog, config.space)
    solution = prior_mod.solve_distribution(
        errors, config.space, table, budget,
        seed=util.derive_seed(config.seed, "prior"))
    _write_json(os.path.join(out, "prior_dist.json"), {
        **solution.to_json(),
        "error_table": errors.to_json(),
    }, h)
    rng = util.substream(config.seed, "population")
    population = prior_mod.sample_population(
        solution, config.space, table, budget,
        config.evo.population_size, rng)
    _write_json(os.path.join(out, "population.json"), {
        "budget": budget,
        "widths": [list(w) for w in population],
    }, h)
    return population


def _supernet_fitness(net: MiniNet, config: RunConfig, data: SynthDataset,
                      table: FlopsTable):
    def fitness(width) -> float:
        report = evaluate(net, config.space, config.train.principle, width,
                          data.x_val, data.y_val, table)
        return report.acc_mean
    return fitness


def _stage_search(out: str, config: RunConfig, h: str, table: FlopsTable,
                  budget: int, fitness, initial_population) -> evo_mod.EvoResult:
    evo_cfg = replace(config.evo, seed=util.derive_seed(config.seed, "evo"))
    if config.method in ("evo", "evo-prior"):
        result = evo_mod.evolve(config.space, table, budget, fitness, evo_cfg,
                                initial_population=initial_population)
    elif config.method == "greedy":
        result = evo_mod.greedy_slim(config.space, table, budget, fitness)
    else:
        pool = evo_mod.random_search(config.space, table, budget,
                                     n=min(20, max(1, config.evo.population_size)),
                                     seed=util.derive_seed(config.seed, "random"))
        scored = [(fitness(w), tuple(-c for c in w), w) for w in pool]
        _, _, best = max(scored, key=lambda t: (t[0], t[1]))
        result = evo_mod.EvoResult(best, max(s[0] for s in scored), [], len(pool))

    _history_csv(result.history, os.path.join(out, "history.csv"), h)
    _write_json(os.path.join(out, "best_width.json"), {
        "method": config.method,
        "budget": config.budget,
        "budget_flops": budget,
        "width": list(result.best_width),
        "fitness": result.best_fitness,
        "flops": table.total(result.best_width),
        "evaluations": result.evaluations,
    }, h)
    if result.history:
        plots.plot_search_history(result.history,
                                  os.path.join(out, "search_history.png"))
    return result


def run_pipeline(config: RunConfig, out: str) -> str:
    """Train, search, retrain the winner, and write report.json.

    Every stage persists its artifacts before the next starts, so a failure
    leaves partial results plus the failing stage's name.
    """
    h = _init_run_dir(out, config)

    def run_stage(name, fn, *args):
        try:
            return fn(*args)
        except Exception as err:
            raise PipelineError(name, err) from err

    table = run_stage("space", _stage_space, out, config, h)
    budget = run_stage("space", config.budget_flops, table)
    data = run_stage("data", make_dataset, config.space, config.data, config.seed)
    net = run_stage("train", _stage_train, out, config, h, data)
    run_stage("audit", _stage_audit, out, config, h)

    population = None
    if config.method == "evo-prior":
        losslog = _load_losslog(os.path.join(out, "losslog.jsonl"), h)
        population = run_stage("prior", _stage_prior, out, config, h, table,
                               budget, losslog)

    fitness = _supernet_fitness(net, config, data, table)
    result = run_stage("search", _stage_search, out, config, h, table, budget,
                       fitness, population)

    def retrain() -> float:
        cfg = replace(config.train, seed=util.derive_seed(config.seed, "retrain"))
        return retrain_from_scratch(config.space, result.best_width, cfg, data)

    retrained_acc = run_stage("retrain", retrain)

    report = {
        "method": config.method,
        "budget": config.budget,
        "budget_flops": budget,
        "seed": config.seed,
        "width": list(result.best_width),
        "supernet_acc": result.best_fitness,
        "retrained_acc": retrained_acc,
        "flops": table.total(result.best_width),
        "history": result.history,
    }
    run_stage("report", _write_json, os.path.join(out, "report.json"), report, h)
    return out


# argument parsing -----------------------------------------------------------


def _space_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", help="existing space.json to load")
    p.add_argument("--layer", action="append", default=None, metavar="L[:BASE[:COUNT[:TIE]]]",
                   help="layer spec, repeatable: max width, base width, grid count, tie group")
    p.add_argument("--input-dim", type=int, default=8)
    p.add_argument("--output-dim", type=int, default=4)


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", choices=("blobs", "spirals"), default="blobs")
    p.add_argument("--n-train", type=int, default=2048)
    p.add_argument("--n-val", type=int, default=512)
    p.add_argument("--noise", type=float, default=0.08)


def _train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--principle", choices=(UA, BC, BCV2), default=BC)
    p.add_argument("--overlap", choices=("exact-fair", "paper-literal"),
                   default="exact-fair")
    p.add_argument("--complementary", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--update-mode", choices=("both", "iterative"), default="both")
    p.add_argument("--two-step-complement", action="store_true")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction,
                   default=False)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lr-min", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.9)


def _search_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--budget", default="0.5x",
                   help="FLOPs budget: absolute count or fraction like 0.5x")
    p.add_argument("--method", choices=METHODS, default="evo")
    p.add_argument("--population-size", type=int, default=40)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--survivors", type=int, default=10)
    p.add_argument("--eta", type=float, default=20.0)


def _parse_layer(text: str) -> LayerSpec:
    parts = text.split(":")
    if not 1 <= len(parts) <= 4:
        raise ValueError(f"bad --layer spec {text!r}")
    max_width = int(parts[0])
    base = int(parts[1]) if len(parts) > 1 else 0
    count = int(parts[2]) if len(parts) > 2 else max_width
    tie = parts[3] if len(parts) > 3 and parts[3] else None
    return LayerSpec(max_width=max_width, base_width=base, grid_count=count,
                     tie_group=tie)


def _build_space(args: argparse.Namespace) -> SearchSpace:
    if args.space:
        if args.layer:
            raise ValueError("--space and --layer are mutually exclusive")
        return load_space(args.space)
    if not args.layer:
        raise ValueError("define the space with --space FILE or --layer specs")
    return SearchSpace(
        layers=tuple(_parse_layer(t) for t in args.layer),
        input_dim=args.input_dim,
        output_dim=args.output_dim,
    )


def _build_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            return RunConfig.from_json(json.load(fh))
    space = _build_space(args)
    principle = Principle(
        kind=args.principle,
        overlap_mode=EXACT_FAIR if args.overlap == "exact-fair" else PAPER_LITERAL,
    )
    train = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        lr_min=args.lr_min,
        momentum=args.momentum,
        seed=args.seed,
        principle=principle,
        complementary=args.complementary,
        update_mode=BOTH_PATHS if args.update_mode == "both" else ITERATIVE,
        complement_two_step=args.two_step_complement,
        standardize=args.standardize,
    )
    data = DataConfig(kind=args.data, n_train=args.n_train, n_val=args.n_val,
                      noise=args.noise)
    evo_cfg = evo_mod.EvoConfig(
        population_size=args.population_size,
        iterations=args.iterations,
        survivors=args.survivors,
        eta=args.eta,
        seed=util.derive_seed(args.seed, "evo"),
    )
    return RunConfig(space=space, data=data, train=train, evo=evo_cfg,
                     budget=args.budget, method=args.method, seed=args.seed)


def _parse_width(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="widthsearch",
        description="Budgeted network-width search with bilaterally coupled "
                    "weight-sharing supernets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="run directory")

    p_space = sub.add_parser("space", help="write space.json and flops.json")
    common(p_space)
    _space_args(p_space)
    _data_args(p_space)
    _train_args(p_space)
    _search_args(p_space)

    p_train = sub.add_parser("train", help="train the supernet")
    common(p_train)
    _space_args(p_train)
    _data_args(p_train)
    _train_args(p_train)
    _search_args(p_train)

    p_audit = sub.add_parser("audit", help="per-channel coverage audit")
    common(p_audit)
    _space_args(p_audit)
    _data_args(p_audit)
    _train_args(p_audit)
    _search_args(p_audit)

    p_prior = sub.add_parser("prior", help="fit the prior sampling distribution")
    common(p_prior)
    _space_args(p_prior)
    _data_args(p_prior)
    _train_args(p_prior)
    _search_args(p_prior)
    p_prior.add_argument("--losslog", help="training log (default: <out>/losslog.jsonl)")

    p_search = sub.add_parser("search", help="search widths under the budget")
    common(p_search)
    _space_args(p_search)
    _data_args(p_search)
    _train_args(p_search)
    _search_args(p_search)
    p_search.add_argument("--oracle", choices=("synthetic",),
                          help="score with the analytic oracle instead of a supernet")

    p_eval = sub.add_parser("eval", help="score widths on the trained supernet")
    common(p_eval)
    _space_args(p_eval)
    _data_args(p_eval)
    _train_args(p_eval)
    _search_args(p_eval)
    p_eval.add_argument("--width", action="append", required=True,
                        help="width vector like 4,6,8; repeatable")

    p_bench = sub.add_parser("bench", help="benchmark tables and scoring")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)

    p_bgen = bench_sub.add_parser("generate", help="exhaustive retrain table")
    common(p_bgen)
    _space_args(p_bgen)
    _data_args(p_bgen)
    _train_args(p_bgen)
    _search_args(p_bgen)
    p_bgen.add_argument("--num-seeds", type=int, default=3)

    p_bscore = bench_sub.add_parser("score", help="rank-correlate a supernet")
    common(p_bscore)
    p_bscore.add_argument("--bench", help="table path (default: <out>/bench.jsonl)")

    p_bcorr = bench_sub.add_parser("correlate",
                                   help="correlate stored predictions with a table")
    p_bcorr.add_argument("--bench", required=True)
    p_bcorr.add_argument("--predictions", required=True,
                         help='JSON file {"widths": [[...]], "predicted": [...]}')

    p_run = sub.add_parser("run", help="full pipeline: train, search, report")
    common(p_run)
    p_run.add_argument("--config", help="re-run from a persisted config.json")
    _space_args(p_run)
    _data_args(p_run)
    _train_args(p_run)
    _search_args(p_run)

    return parser


# command bodies -------------------------------------------------------------


def _cmd_space(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    _stage_space(args.out, config, h)
    print(f"{args.out}: space.json, flops.json written (run {h})")
    return 0


def _cmd_train(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    table = _stage_space(args.out, config, h)
    data = make_dataset(config.space, config.data, config.seed)
    _stage_train(args.out, config, h, data)
    budget = config.budget_flops(table)
    print(f"{args.out}: supernet trained ({config.train.epochs} epochs, "
          f"budget {budget} FLOPs available for search)")
    return 0


def _cmd_audit(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    _stage_audit(args.out, config, h)
    print(f"{args.out}: audit.json, audit.csv, audit.png written")
    return 0


def _cmd_prior(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    table = FlopsTable.from_dense(config.space)
    budget = config.budget_flops(table)
    losslog_path = args.losslog or os.path.join(args.out, "losslog.jsonl")
    losslog = _load_losslog(losslog_path, h)
    population = _stage_prior(args.out, config, h, table, budget, losslog)
    print(f"{args.out}: prior_dist.json, population.json "
          f"({len(population)} widths under {budget} FLOPs)")
    return 0


def _cmd_search(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    table = FlopsTable.from_dense(config.space)
    budget = config.budget_flops(table)

    if args.oracle == "synthetic":
        fitness = bench_mod.synthetic_oracle(
            config.space, seed=util.derive_seed(config.seed, "oracle"))
        losslog = LossLog()
        for e in bench_mod.synthetic_losslog(
                config.space, fitness,
                seed=util.derive_seed(config.seed, "oracle")):
            losslog.record(e["step"], tuple(e["width"]), e["loss"], e["side"])
    else:
        net, found = load_checkpoint(os.path.join(args.out, "supernet.ckpt"))
        util.check_artifact_hash(found, h, "supernet.ckpt")
        data = make_dataset(config.space, config.data, config.seed)
        fitness = _supernet_fitness(net, config, data, table)
        losslog = None

    population = None
    if config.method == "evo-prior":
        if losslog is None:
            losslog = _load_losslog(os.path.join(args.out, "losslog.jsonl"), h)
        population = _stage_prior(args.out, config, h, table, budget, losslog)

    result = _stage_search(args.out, config, h, table, budget, fitness, population)
    print(f"{args.out}: best width {list(result.best_width)} "
          f"fitness {result.best_fitness:.4f} "
          f"({table.total(result.best_width)}/{budget} FLOPs, {config.method})")
    return 0


def _cmd_eval(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    table = FlopsTable.from_dense(config.space)
    net, found = load_checkpoint(os.path.join(args.out, "supernet.ckpt"))
    util.check_artifact_hash(found, h, "supernet.ckpt")
    data = make_dataset(config.space, config.data, config.seed)
    for text in args.width:
        report = evaluate(net, config.space, config.train.principle,
                          _parse_width(text), data.x_val, data.y_val, table)
        payload = report.to_json()
        payload["config_hash"] = h
        print(util.canonical_json(payload))
    return 0


def _cmd_bench_generate(args) -> int:
    config = _build_config(args)
    h = _init_run_dir(args.out, config)
    table = FlopsTable.from_dense(config.space)
    data = make_dataset(config.space, config.data, config.seed)
    bench = bench_mod.generate_benchmark(config.space, data, table, config.train,
                                         num_seeds=args.num_seeds)
    bench.header["config_hash"] = h
    bench.save(os.path.join(args.out, "bench.jsonl"))
    bench.to_csv(os.path.join(args.out, "bench.csv"))
    plots.plot_benchmark(bench.acc_means(), bench.flops_values(),
                         os.path.join(args.out, "benchmark.png"))
    print(f"{args.out}: bench.jsonl with {len(bench.records)} widths "
          f"x {args.num_seeds} seeds")
    return 0


def _cmd_bench_score(args) -> int:
    config, h = _load_run_dir(args.out)
    table = FlopsTable.from_dense(config.space)
    bench_path = args.bench or os.path.join(args.out, "bench.jsonl")
    bench = bench_mod.BenchmarkTable.load(bench_path)
    util.check_artifact_hash(bench.header.get("config_hash"), h, bench_path)
    net, found = load_checkpoint(os.path.join(args.out, "supernet.ckpt"))
    util.check_artifact_hash(found, h, "supernet.ckpt")
    data = make_dataset(config.space, config.data, config.seed)
    result = bench_mod.score_supernet(net, config.space, config.train.principle,
                                      bench, data, table)
    _write_json(os.path.join(args.out, "score.json"), result.to_json(), h)
    plots.plot_prediction_scatter(result.predicted, result.truth,
                                  result.correlation.to_json(),
                                  os.path.join(args.out, "prediction_scatter.png"))
    c = result.correlation
    print(f"{args.out}: kendall={c.kendall_tau:.4f} spearman={c.spearman:.4f} "
          f"pearson={c.pearson:.4f}")
    return 0


def _cmd_bench_correlate(args) -> int:
    bench = bench_mod.BenchmarkTable.load(args.bench)
    with open(args.predictions, encoding="utf-8") as fh:
        pred_payload = json.load(fh)
    bench_hash = bench.header.get("config_hash")
    pred_hash = pred_payload.get("config_hash")
    if bench_hash and pred_hash and bench_hash != pred_hash:
        raise ValueError(
            f"predictions ({pred_hash}) and table ({bench_hash}) "
            "come from different runs"
        )
    by_width = {tuple(w): p for w, p in
                zip(pred_payload["widths"], pred_payload["predicted"])}
    try:
        predicted = [by_width[w] for w in bench.widths()]
    except KeyError as missing:
        raise ValueError(f"predictions missing width {missing}") from None
    report = bench_mod.correlate(predicted, bench.acc_means().tolist())
    print(util.canonical_json(report.to_json()))
    return 0


def _cmd_run(args) -> int:
    config = _build_config(args)
    out = run_pipeline(config, args.out)
    with open(os.path.join(out, "report.json"), encoding="utf-8") as fh:
        report = json.load(fh)
    print(f"{out}: width {report['width']} supernet_acc "
          f"{report['supernet_acc']:.4f} retrained_acc "
          f"{report['retrained_acc']:.4f} flops {report['flops']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "space":
            return _cmd_space(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "audit":
            return _cmd_audit(args)
        if args.command == "prior":
            return _cmd_prior(args)
        if args.command == "search":
            return _cmd_search(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "bench":
            if args.bench_command == "generate":
                return _cmd_bench_generate(args)
            if args.bench_command == "score":
                return _cmd_bench_score(args)
            return _cmd_bench_correlate(args)
        if args.command == "run":
            return _cmd_run(args)
        parser.error(f"unknown command {args.command!r}")
    except PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
