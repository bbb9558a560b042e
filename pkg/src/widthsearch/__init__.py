"""Budgeted width search over weight-sharing supernets.

The package splits into a thin stack: `space` defines searchable width
grids and FLOPs accounting, `assign` maps a width to physical channel
indices under the unilateral / bilateral coupling rules, `net` is a small
dense-network engine with sliced forward/backward, `supertrain` runs
fairness-aware supernet training, `prior` fits a budget-constrained
sampling distribution from training losses, `evo` searches widths under a
FLOPs budget, `bench` measures how faithfully a supernet ranks widths, and
`cli` wires everything into a reproducible pipeline.
"""

from .assign import (BC, BCV2, EXACT_FAIR, PAPER_LITERAL, UA, IndexAssignment,
                     Principle, audit_report, cardinality_audit)
from .bench import (BenchmarkTable, CorrelationReport, correlate,
                    generate_benchmark, score_supernet, synthetic_oracle)
from .evaluation import EvalReport, evaluate, retrain_from_scratch, train_standalone
from .evo import (EvoConfig, EvoResult, evolve, greedy_slim,
                  polynomial_mutation, random_search, two_point_crossover)
from .net import MiniNet, SynthDataset, gaussian_blobs, grad_check, two_spirals
from .prior import (ErrorTable, PriorResult, build_error_table,
                    sample_population, solve_distribution)
from .space import (FlopsTable, LayerSpec, SearchSpace, Width, build_grid,
                    complement, flops, sample_uniform)
from .supertrain import (BOTH_PATHS, ITERATIVE, LossLog, TrainConfig,
                         TrainResult, train_supernet)

__version__ = "0.1.0"

__all__ = [
    "BC", "BCV2", "BOTH_PATHS", "EXACT_FAIR", "ITERATIVE", "PAPER_LITERAL",
    "UA", "BenchmarkTable", "CorrelationReport", "ErrorTable", "EvalReport",
    "EvoConfig", "EvoResult", "FlopsTable", "IndexAssignment", "LayerSpec",
    "LossLog", "MiniNet", "PriorResult", "Principle", "SearchSpace",
    "SynthDataset", "TrainConfig", "TrainResult", "Width", "audit_report",
    "build_error_table", "build_grid", "cardinality_audit", "complement",
    "correlate", "evaluate", "evolve", "flops", "gaussian_blobs",
    "generate_benchmark", "grad_check", "greedy_slim", "polynomial_mutation",
    "random_search", "retrain_from_scratch", "sample_population",
    "sample_uniform", "score_supernet", "solve_distribution",
    "synthetic_oracle", "train_standalone", "train_supernet",
    "two_point_crossover", "two_spirals",
]
