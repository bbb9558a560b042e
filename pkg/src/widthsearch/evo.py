"""Search algorithms over the width space, all budget-constrained.

The evolutionary search works on gene vectors (one gene per tie group of
layers). Each generation keeps the best individual plus tournament winners,
then refills the population with two-point crossover and bounded polynomial
mutation; offspring that overshoot the budget are repaired by walking single
genes down their grids. FLOPs is a hard constraint, not a second objective:
every width scored during the search passes one feasibility choke point.
Greedy slimming and uniform random sampling are the baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import util
from .space import FlopsTable, SearchSpace, Width, sample_uniform


@dataclass(frozen=True)
class EvoConfig:
    population_size: int = 40
    iterations: int = 50
    survivors: int = 10
    tournament_size: int = 2
    eta: float = 20.0
    mutation_prob: float | None = None  # default 1 / number of genes
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.survivors < self.population_size:
            raise ValueError("need 0 < survivors < population_size")
        if self.tournament_size < 1 or self.iterations < 0:
            raise ValueError("bad tournament size or iteration count")

    def to_json(self) -> dict:
        return {
            "population_size": self.population_size,
            "iterations": self.iterations,
            "survivors": self.survivors,
            "tournament_size": self.tournament_size,
            "eta": self.eta,
            "mutation_prob": self.mutation_prob,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvoConfig":
        return cls(**obj)


@dataclass
class EvoResult:
    best_width: Width
    best_fitness: float
    history: list[dict] = field(default_factory=list)
    evaluations: int = 0


def polynomial_delta(u: float, eta: float) -> float:
    """Bounded perturbation in (-1, 1) with density (eta+1)/2 * (1-|d|)^eta."""
    if u <= 0.5:
        return (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0
    return 1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0))


class _Genome:
    """Gene-space view of widths: tied layers collapse to one position."""

    def __init__(self, space: SearchSpace):
        self.space = space
        self.genes = space.genes()
        self.grids = [space.layers[g[0]].grid for g in self.genes]

    def to_indices(self, width: Width) -> list[int]:
        return [self.grids[g].index(width[members[0]])
                for g, members in enumerate(self.genes)]

    def to_width(self, indices: list[int]) -> Width:
        w = [0] * self.space.num_layers
        for g, members in enumerate(self.genes):
            for l in members:
                w[l] = self.grids[g][indices[g]]
        return tuple(w)

    def repair(self, indices: list[int], table: FlopsTable, budget: int) -> list[int]:
        """Walk genes down their grids until the width fits the budget,
        always taking the single step that sheds the fewest FLOPs."""
        idx = list(indices)
        while table.total(self.to_width(idx)) > budget:
            current = table.total(self.to_width(idx))
            best_gene, best_drop = -1, None
            for g in range(len(idx)):
                if idx[g] == 0:
                    continue
                trial = list(idx)
                trial[g] -= 1
                drop = current - table.total(self.to_width(trial))
                if drop > 0 and (best_drop is None or drop < best_drop):
                    best_gene, best_drop = g, drop
            if best_gene < 0:
                raise ValueError(
                    f"budget {budget} below the minimum achievable FLOPs "
                    f"{table.min_total()}"
                )
            idx[best_gene] -= 1
        return idx


def two_point_crossover(a: Width, b: Width, cut1: int, cut2: int,
                        space: SearchSpace) -> tuple[Width, Width]:
    """Swap the gene segment [cut1:cut2) between two widths.

    Cuts index gene positions (tied layers count once), 0 <= cut1 < cut2 <=
    number of genes. Children stay grid-valid by construction.
    """
    genome = _Genome(space)
    ia, ib = genome.to_indices(space.validate(a)), genome.to_indices(space.validate(b))
    n = len(genome.genes)
    if not 0 <= cut1 < cut2 <= n:
        raise ValueError(f"need 0 <= cut1 < cut2 <= {n}, got ({cut1}, {cut2})")
    child1 = [ib[i] if cut1 <= i < cut2 else ia[i] for i in range(n)]
    child2 = [ia[i] if cut1 <= i < cut2 else ib[i] for i in range(n)]
    return genome.to_width(child1), genome.to_width(child2)


def polynomial_mutation(width: Width, space: SearchSpace, eta: float,
                        rng: np.random.Generator,
                        prob: float | None = None) -> Width:
    """Independently perturb each gene's grid index with probability `prob`
    (default 1/genes) by a polynomial-density draw, rounded and clamped."""
    genome = _Genome(space)
    idx = genome.to_indices(space.validate(width))
    if prob is None:
        prob = 1.0 / len(genome.genes)
    for g, grid in enumerate(genome.grids):
        if len(grid) < 2 or rng.random() >= prob:
            continue
        delta = polynomial_delta(float(rng.random()), eta)
        moved = idx[g] + delta * (len(grid) - 1)
        idx[g] = int(np.clip(round(moved), 0, len(grid) - 1))
    return genome.to_width(idx)


class _Scoreboard:
    """Caching fitness wrapper; the one place search candidates get scored."""

    def __init__(self, fitness, table: FlopsTable, budget: int):
        self.fitness = fitness
        self.table = table
        self.budget = budget
        self.cache: dict[Width, float] = {}
        self.evaluations = 0

    def __call__(self, width: Width) -> float:
        if self.table.total(width) > self.budget:
            raise AssertionError(
                f"over-budget width {width} reached the evaluator; "
                "repair or rejection failed upstream"
            )
        if width not in self.cache:
            self.cache[width] = float(self.fitness(width))
            self.evaluations += 1
        return self.cache[width]


def _uniform_feasible(space: SearchSpace, table: FlopsTable, budget: int,
                      n: int, rng: np.random.Generator) -> list[Width]:
    if budget < table.min_total():
        raise ValueError(
            f"budget {budget} below the minimum achievable FLOPs {table.min_total()}"
        )
    seen: set[Width] = set()
    out: list[Width] = []
    since_new = 0
    while len(out) < n and since_new < 5000:
        w = sample_uniform(space, rng)
        if w not in seen and table.total(w) <= budget:
            seen.add(w)
            out.append(w)
            since_new = 0
        else:
            since_new += 1
    if len(out) < n and space.size() <= 65536:
        for w in sorted(space.enumerate_widths(), key=lambda w: (table.total(w), w)):
            if len(out) >= n:
                break
            if w not in seen and table.total(w) <= budget:
                seen.add(w)
                out.append(w)
    if not out:
        raise RuntimeError(f"found no width with FLOPs <= {budget}")
    return out


def evolve(space: SearchSpace, table: FlopsTable, budget: int, fitness,
           config: EvoConfig,
           initial_population: list[Width] | None = None) -> EvoResult:
    """Run the search; `fitness` maps a width to a higher-is-better score.

    The caller chooses the scorer: a closure over a trained supernet for
    real searches, or an analytic oracle for harness runs.
    """
    rng = util.substream(config.seed, "evolution")
    genome = _Genome(space)
    score = _Scoreboard(fitness, table, budget)
    mut_prob = config.mutation_prob
    if mut_prob is None:
        mut_prob = 1.0 / len(genome.genes)

    if initial_population is not None:
        if not initial_population:
            raise ValueError("initial population is empty")
        population = [space.validate(w) for w in initial_population]
        for w in population:
            if table.total(w) > budget:
                raise ValueError(f"initial width {w} exceeds budget {budget}")
    else:
        population = _uniform_feasible(space, table, budget,
                                       config.population_size, rng)

    def best_of(widths: list[Width]) -> Width:
        return max(widths, key=lambda w: (score(w), tuple(-c for c in w)))

    history: list[dict] = []
    best = best_of(population)
    if space.size() == 1:
        history.append({"iteration": 0, "best_fitness": score(best),
                        "mean_fitness": score(best), "best_width": list(best)})
        return EvoResult(best, score(best), history, score.evaluations)

    for it in range(config.iterations):
        fits = [score(w) for w in population]
        history.append({
            "iteration": it,
            "best_fitness": score(best),
            "mean_fitness": float(np.mean(fits)),
            "best_width": list(best),
        })

        survivors = [best]
        while len(survivors) < min(config.survivors, len(population)):
            entrants = [population[i] for i in
                        rng.integers(len(population), size=config.tournament_size)]
            survivors.append(best_of(entrants))

        children: list[Width] = []
        seen = set(survivors)
        while len(survivors) + len(children) < config.population_size:
            pa, pb = (survivors[int(rng.integers(len(survivors)))] for _ in range(2))
            child = pa
            for _ in range(5):  # a few tries for a fresh individual
                n = len(genome.genes)
                cut1 = int(rng.integers(0, n))
                cut2 = int(rng.integers(cut1 + 1, n + 1))
                cand, _ = two_point_crossover(pa, pb, cut1, cut2, space)
                cand = polynomial_mutation(cand, space, config.eta, rng, mut_prob)
                idx = genome.repair(genome.to_indices(cand), table, budget)
                child = genome.to_width(idx)
                if child not in seen:
                    break
            children.append(child)
            seen.add(child)

        population = survivors + children
        best = best_of([best] + population)

    history.append({
        "iteration": config.iterations,
        "best_fitness": score(best),
        "mean_fitness": float(np.mean([score(w) for w in population])),
        "best_width": list(best),
    })
    return EvoResult(best, score(best), history, score.evaluations)


def random_search(space: SearchSpace, table: FlopsTable, budget: int,
                  n: int = 20, seed: int = 0) -> list[Width]:
    """n distinct feasible widths by uniform rejection sampling.

    Returns the candidate set only; picking a winner (short retraining,
    supernet scoring) is the caller's harness.
    """
    rng = util.substream(seed, "random-search")
    return _uniform_feasible(space, table, budget, n, rng)


def greedy_slim(space: SearchSpace, table: FlopsTable, budget: int,
                fitness) -> EvoResult:
    """Shrink from the widest network one grid step at a time, keeping the
    single-gene reduction that scores best, until the budget is met.

    This baseline deliberately scores over-budget intermediates (the walk
    starts above the budget), so it calls the fitness function directly
    rather than through the feasibility-checked evaluator.
    """
    genome = _Genome(space)
    idx = [len(g) - 1 for g in genome.grids]
    evaluations = 0
    while table.total(genome.to_width(idx)) > budget:
        options = []
        for g in range(len(idx)):
            if idx[g] == 0:
                continue
            trial = list(idx)
            trial[g] -= 1
            options.append(trial)
        if not options:
            raise ValueError(
                f"budget {budget} below the minimum achievable FLOPs "
                f"{table.min_total()}"
            )
        scored = []
        for trial in options:
            w = genome.to_width(trial)
            scored.append((float(fitness(w)), tuple(-c for c in w), trial))
            evaluations += 1
        _, _, idx = max(scored, key=lambda t: (t[0], t[1]))
    best = genome.to_width(idx)
    return EvoResult(best, float(fitness(best)), [], evaluations + 1)
