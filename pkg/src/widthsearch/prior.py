"""Prior width distributions fitted to the supernet's training log.

The training log is mined for the lowest-loss sampled widths; averaging
their losses per (layer, candidate width) cell gives a potential-error
table. Minimizing the expected error of independent per-layer width draws,
subject to the expected FLOPs staying under budget, is a linear objective
with one bilinear constraint over a product of simplices. It is solved with
projected gradient descent plus a quadratic penalty, randomized restarts,
and a final blend-repair toward the cheapest width to guarantee
feasibility. Sampling the result seeds the evolutionary search with widths
that are already cheap and promising.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import util
from .space import FlopsTable, SearchSpace, Width, sample_uniform
from .supertrain import LossLog

TOP_M = 100


@dataclass
class ErrorTable:
    """Per-layer potential error aligned with each layer's grid.

    values[l][i] is the mean loss, over the retained low-loss samples, of
    those that used grid width i at layer l; counts[l][i] is how many such
    samples there were. Cells never visited are imputed pessimistically
    (max observed cell plus one standard deviation across observed cells).
    """

    values: list[np.ndarray]
    counts: list[np.ndarray]

    def observed(self, layer: int) -> np.ndarray:
        return self.counts[layer] > 0

    def to_json(self) -> dict:
        return {
            "values": [v.tolist() for v in self.values],
            "counts": [c.tolist() for c in self.counts],
        }


def _log_entries(log: LossLog | list[dict]) -> list[dict]:
    return log.entries() if isinstance(log, LossLog) else list(log)


def build_error_table(log: LossLog | list[dict], space: SearchSpace,
                      m: int = TOP_M) -> ErrorTable:
    entries = _log_entries(log)
    if not entries:
        raise ValueError("empty training log; train the supernet first")
    if m > len(entries):
        warnings.warn(
            f"requested top {m} samples but log has {len(entries)}; using all",
            stacklevel=2,
        )
    top = sorted(entries, key=lambda e: e["loss"])[:m]

    grids = space.grids()
    sums = [np.zeros(len(g)) for g in grids]
    hits = [np.zeros(len(g), dtype=np.int64) for g in grids]
    for entry in top:
        for l, (grid, c) in enumerate(zip(grids, entry["width"])):
            i = grid.index(c)
            sums[l][i] += entry["loss"]
            hits[l][i] += 1

    values = []
    observed_cells: list[float] = []
    for l in range(space.num_layers):
        mask = hits[l] > 0
        vals = np.zeros(len(grids[l]))
        vals[mask] = sums[l][mask] / hits[l][mask]
        values.append(vals)
        observed_cells.extend(vals[mask].tolist())

    cells = np.array(observed_cells)
    fill = cells.max() + (cells.std(ddof=1) if len(cells) > 1 else 0.0)
    for l in range(space.num_layers):
        values[l][hits[l] == 0] = fill
    return ErrorTable(values=values, counts=hits)


@dataclass
class PriorResult:
    """Per-layer width distributions plus solve diagnostics."""

    distributions: list[np.ndarray]
    objective: float
    expected_flops: float
    budget: int

    def to_json(self) -> dict:
        return {
            "distributions": [d.tolist() for d in self.distributions],
            "objective": self.objective,
            "expected_flops": self.expected_flops,
            "budget": self.budget,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PriorResult":
        return cls(
            distributions=[np.array(d) for d in obj["distributions"]],
            objective=obj["objective"],
            expected_flops=obj["expected_flops"],
            budget=obj["budget"],
        )


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = idx[(u - css / idx) > 0][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


class BudgetModel:
    """Expected FLOPs of independent per-gene width draws, and its gradient.

    Connections between two layers of the same tie group contribute along
    the diagonal (tied layers always share a width); everything else is
    bilinear in the two endpoint distributions. Boundary pseudo-layers
    (input and output dims) carry single-point distributions.
    """

    def __init__(self, space: SearchSpace, table: FlopsTable):
        genes = space.genes()
        gene_of = {l: g for g, members in enumerate(genes) for l in members}
        grids = space.grids()
        self.genes = genes
        self.conns: list[tuple[int | None, int | None, np.ndarray]] = []
        nodes = [None] + list(range(space.num_layers)) + [None]
        for conn in range(space.num_layers + 1):
            a, b = nodes[conn], nodes[conn + 1]
            grid_in = grids[a] if a is not None else (space.input_dim,)
            grid_out = grids[b] if b is not None else (space.output_dim,)
            mat = np.array([
                [table.connection_flops(conn, ci, co) for co in grid_out]
                for ci in grid_in
            ], dtype=float)
            gin = gene_of[a] if a is not None else None
            gout = gene_of[b] if b is not None else None
            self.conns.append((gin, gout, mat))

    def expected(self, p: list[np.ndarray]) -> float:
        total = 0.0
        for gin, gout, mat in self.conns:
            if gin is not None and gin == gout:
                total += float(np.diag(mat) @ p[gin])
            else:
                pi = p[gin] if gin is not None else np.ones(1)
                po = p[gout] if gout is not None else np.ones(1)
                total += float(pi @ mat @ po)
        return total

    def gradient(self, p: list[np.ndarray]) -> list[np.ndarray]:
        grad = [np.zeros_like(pg) for pg in p]
        for gin, gout, mat in self.conns:
            if gin is not None and gin == gout:
                grad[gin] += np.diag(mat)
                continue
            pi = p[gin] if gin is not None else np.ones(1)
            po = p[gout] if gout is not None else np.ones(1)
            if gin is not None:
                grad[gin] += mat @ po
            if gout is not None:
                grad[gout] += mat.T @ pi
        return grad


def _gene_errors(errors: ErrorTable, space: SearchSpace) -> list[np.ndarray]:
    """Collapse per-layer error vectors onto genes (tied layers add up)."""
    out = []
    for members in space.genes():
        e = np.zeros_like(errors.values[members[0]])
        for l in members:
            e += errors.values[l]
        out.append(e)
    return out


def _objective(p: list[np.ndarray], e: list[np.ndarray]) -> float:
    return float(sum(pg @ eg for pg, eg in zip(p, e)))


def _min_mass(space: SearchSpace) -> list[np.ndarray]:
    """Point mass on each gene's smallest width."""
    out = []
    for members in space.genes():
        k = len(space.layers[members[0]].grid)
        v = np.zeros(k)
        v[0] = 1.0
        out.append(v)
    return out


def _repair(p: list[np.ndarray], model: BudgetModel, budget: float,
            space: SearchSpace) -> list[np.ndarray]:
    """Blend toward the cheapest point mass until the budget holds."""
    if model.expected(p) <= budget:
        return p
    anchor = _min_mass(space)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        blend = [(1 - mid) * pg + mid * ag for pg, ag in zip(p, anchor)]
        if model.expected(blend) <= budget:
            hi = mid
        else:
            lo = mid
    return [(1 - hi) * pg + hi * ag for pg, ag in zip(p, anchor)]


def _pgd(p0: list[np.ndarray], e: list[np.ndarray], model: BudgetModel,
         budget: float, iters: int, step0: float, rho0: float) -> list[np.ndarray]:
    p = [project_simplex(pg) for pg in p0]
    rho = rho0

    def penalized(q: list[np.ndarray]) -> float:
        gap = max(0.0, model.expected(q) - budget)
        return _objective(q, e) + rho * gap * gap

    for it in range(iters):
        gap = max(0.0, model.expected(p) - budget)
        fgrad = model.gradient(p) if gap > 0 else None
        grads = []
        for g, eg in enumerate(e):
            gg = eg.copy()
            if fgrad is not None:
                gg += 2.0 * rho * gap * fgrad[g]
            grads.append(gg)
        f_cur = penalized(p)
        step = step0
        for _ in range(25):
            q = [project_simplex(pg - step * gg) for pg, gg in zip(p, grads)]
            if penalized(q) <= f_cur:
                break
            step *= 0.5
        p = q
        if it % 100 == 99 and model.expected(p) > budget * (1.0 + 1e-6):
            rho *= 2.0
    return p


def solve_distribution(errors: ErrorTable, space: SearchSpace, table: FlopsTable,
                       budget: int, seed: int = 0, restarts: int = 10,
                       iters: int = 2000, step: float = 0.05,
                       rho: float | None = None) -> PriorResult:
    """Minimize expected potential error under the expected-FLOPs budget.

    Restarts (uniform plus random Dirichlet points) run as independent
    jobs; the winner is the first candidate attaining the minimum
    objective, so results do not depend on the worker pool.
    """
    if budget < table.min_total():
        raise ValueError(
            f"budget {budget} below the minimum achievable FLOPs {table.min_total()}"
        )
    model = BudgetModel(space, table)
    e = _gene_errors(errors, space)
    if rho is None:
        # scale the penalty so a relative budget gap of 1e-3 already costs
        # about as much as the whole error objective can vary
        span = sum(float(eg.max() - eg.min()) for eg in e) + 1e-12
        rho = span / max(1.0, (1e-3 * budget) ** 2)

    rng = np.random.default_rng(seed)
    sizes = [len(eg) for eg in e]
    starts = [[np.full(k, 1.0 / k) for k in sizes]]
    for _ in range(restarts - 1):
        starts.append([rng.dirichlet(np.ones(k)) for k in sizes])

    def solve_one(p0: list[np.ndarray]) -> list[np.ndarray]:
        p = _pgd(p0, e, model, float(budget), iters, step, rho)
        return _repair(p, model, float(budget), space)

    candidates = util.ordered_map(solve_one, starts)
    uniform = [np.full(k, 1.0 / k) for k in sizes]
    if model.expected(uniform) <= budget:
        candidates.append(uniform)
    candidates.append(_min_mass(space))

    best = candidates[0]
    best_obj = _objective(best, e)
    for cand in candidates[1:]:
        obj = _objective(cand, e)
        if obj < best_obj:
            best, best_obj = cand, obj

    for pg in best:
        if abs(pg.sum() - 1.0) > 1e-9 or (pg < -1e-12).any():
            raise AssertionError("solver left the probability simplex")
    ef = model.expected(best)
    if ef > budget * 1.001:
        raise AssertionError(f"solver returned an infeasible prior: E[F]={ef}")

    per_layer: list[np.ndarray] = [np.empty(0)] * space.num_layers
    for g, members in enumerate(space.genes()):
        for l in members:
            per_layer[l] = best[g].copy()
    return PriorResult(
        distributions=per_layer,
        objective=best_obj,
        expected_flops=ef,
        budget=budget,
    )


def draw_width(prior: PriorResult, space: SearchSpace,
               rng: np.random.Generator) -> Width:
    """One width with independent per-gene draws from the prior."""
    w = [0] * space.num_layers
    for members in space.genes():
        grid = space.layers[members[0]].grid
        p = prior.distributions[members[0]]
        c = int(grid[rng.choice(len(grid), p=p / p.sum())])
        for l in members:
            w[l] = c
    return tuple(w)


def sample_population(prior: PriorResult, space: SearchSpace, table: FlopsTable,
                      budget: int, size: int, rng: np.random.Generator,
                      max_draws: int = 1_000_000,
                      stall_draws: int = 2000) -> list[Width]:
    """Up to `size` distinct widths under the hard budget.

    Draws from the prior with rejection of over-budget widths. An
    acceptance rate below 0.1% after the full draw allowance aborts (the
    prior and budget disagree). If the accepted draws stop yielding new
    widths (a concentrated prior), the population is padded with
    uniform-feasible samples; tiny spaces fall back to enumeration.
    """
    if budget < table.min_total():
        raise ValueError(
            f"budget {budget} below the minimum achievable FLOPs {table.min_total()}"
        )
    seen: set[Width] = set()
    out: list[Width] = []

    draws = 0
    accepted = 0
    since_new = 0
    while len(out) < size and draws < max_draws and since_new < stall_draws:
        w = draw_width(prior, space, rng)
        draws += 1
        if table.total(w) > budget:
            continue
        accepted += 1
        if w in seen:
            since_new += 1
            continue
        since_new = 0
        seen.add(w)
        out.append(w)
    if draws >= max_draws and accepted < draws * 0.001:
        raise RuntimeError(
            f"prior acceptance rate {accepted}/{draws} below 0.1%; "
            f"the distribution and budget {budget} are inconsistent"
        )

    since_new = 0
    while len(out) < size and since_new < stall_draws:
        w = sample_uniform(space, rng)
        if w not in seen and table.total(w) <= budget:
            seen.add(w)
            out.append(w)
            since_new = 0
        else:
            since_new += 1
    if len(out) < size and space.size() <= 65536:
        for w in sorted(space.enumerate_widths(), key=lambda w: (table.total(w), w)):
            if len(out) >= size:
                break
            if w not in seen and table.total(w) <= budget:
                seen.add(w)
                out.append(w)
    if not out:
        raise RuntimeError(f"found no width with FLOPs <= {budget}")
    return out
