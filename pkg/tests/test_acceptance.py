"""Release gate: the eleven checks this package must pass before shipping.

One test per numbered criterion, so `pytest -v` prints a pass/fail line for
each. The combinatorial checks (1-5, 10, 11) are exact; the statistical ones
(6-9) use fixed seeds and assert orderings or tolerance bands that held with
comfortable margins when the recipes were frozen. Where a criterion carries a
runtime bound, the test measures and asserts it.
"""

import itertools
import json
import os
import time

import numpy as np
import pytest

from widthsearch import util
from widthsearch.assign import (BC, BCV2, EXACT_FAIR, PAPER_LITERAL, UA,
                                Principle, cardinality_audit)
from widthsearch.bench import (generate_benchmark, kendall, pearson,
                               score_supernet, spearman, synthetic_losslog,
                               synthetic_oracle)
from widthsearch.cli import DataConfig, RunConfig, run_pipeline
from widthsearch.evo import EvoConfig, evolve, greedy_slim
from widthsearch.net import (GradBatch, MiniNet, gaussian_blobs, grad_check,
                             path_slices, two_spirals)
from widthsearch.prior import (BudgetModel, ErrorTable, build_error_table,
                               sample_population, solve_distribution)
from widthsearch.space import (FlopsTable, LayerSpec, SearchSpace, complement,
                               sample_uniform)
from widthsearch.supertrain import (BOTH_PATHS, ITERATIVE, TrainConfig,
                                    train_supernet)


def test_criterion_01_cardinality_counts_exact():
    """Unilateral counts fall off linearly with channel index; bilateral
    counts are flat at l+1. Checked channel-by-channel for every ungrouped
    layer width from 2 to 64, zero tolerance, under one second."""
    t0 = time.monotonic()
    ua, bc = Principle(kind=UA), Principle(kind=BC)
    for l in range(2, 65):
        spec = LayerSpec(l, 0, l)  # grid step 1: widths 1..l
        assert np.array_equal(cardinality_audit(ua, spec), np.arange(l, 0, -1))
        assert np.array_equal(cardinality_audit(bc, spec), np.full(l, l + 1))
    # the classic 6-wide illustration: every channel covered exactly 7 times
    assert cardinality_audit(bc, LayerSpec(6, 0, 6)).tolist() == [7] * 6
    assert time.monotonic() - t0 < 1.0


def test_criterion_02_base_width_cardinality():
    """With a base width l_s the widened bilateral layer keeps counts flat at
    l+1-l_s in exact_fair mode, for every 1 <= l_s < l <= 64. The narrower
    paper_literal sizing instead overcounts the always-present middle band by
    exactly one; that fixed deviation is asserted too."""
    t0 = time.monotonic()
    fair_p = Principle(kind=BCV2, overlap_mode=EXACT_FAIR)
    lit_p = Principle(kind=BCV2, overlap_mode=PAPER_LITERAL)
    for l in range(2, 65):
        for ls in range(1, l):
            spec = LayerSpec(l, ls, l - ls + 1)  # ungrouped: widths ls..l
            base = l + 1 - ls

            fair = cardinality_audit(fair_p, spec)
            assert fair.shape == (l + ls,)
            assert np.array_equal(fair, np.full(l + ls, base))

            lit = cardinality_audit(lit_p, spec)
            w = l + ls - 1
            ch = np.arange(1, w + 1)
            expected = base + ((ch >= ls) & (ch <= l)).astype(np.int64)
            assert lit.shape == (w,)
            assert np.array_equal(lit, expected)
    assert time.monotonic() - t0 < 5.0


def test_criterion_03_complement_example_and_involution():
    space6 = SearchSpace(layers=tuple(LayerSpec(6, 0, 6) for _ in range(3)),
                         input_dim=4, output_dim=2)
    assert complement((3, 2, 4), space6) == (3, 4, 2)

    spaces = [
        SearchSpace(layers=tuple(LayerSpec(6, 0, 6) for _ in range(4)),
                    input_dim=4, output_dim=2),
        SearchSpace(layers=tuple(LayerSpec(12, 4, 3) for _ in range(3)),
                    input_dim=4, output_dim=2),
        SearchSpace(layers=(LayerSpec(16, 0, 4),
                            LayerSpec(16, 0, 4, tie_group="blk"),
                            LayerSpec(16, 0, 4, tie_group="blk")),
                    input_dim=4, output_dim=2),
    ]
    rng = util.substream(0, "involution")
    checked = 0
    for space in spaces:
        for _ in range(3400):
            w = sample_uniform(space, rng)
            assert complement(complement(w, space), space) == w
            checked += 1
    assert checked >= 10_000


def test_criterion_04_training_touch_counters():
    """Ten thousand complementary batch pairs: bilateral training touches
    every channel of every layer the same number of times, exactly;
    unilateral training leaves a strictly decreasing staircase."""
    t0 = time.monotonic()
    space = SearchSpace(layers=(LayerSpec(8, 0, 8), LayerSpec(8, 0, 8)),
                        input_dim=6, output_dim=3)
    data = gaussian_blobs(6, 3, 3200, 256, util.substream(0, "data"))
    # 3200 samples / batch 16 = 200 steps per epoch; 50 epochs = 10^4 pairs
    bc = train_supernet(space, data, TrainConfig(
        epochs=50, batch_size=16, seed=0, principle=Principle(kind=BC),
        complementary=True))
    assert bc.steps == 10_000
    for counts in bc.channel_counts:
        assert (counts == counts[0]).all()

    ua = train_supernet(space, data, TrainConfig(
        epochs=50, batch_size=16, seed=0, principle=Principle(kind=UA),
        complementary=True))
    assert ua.steps == 10_000
    for counts in ua.channel_counts:
        assert (np.diff(counts) < 0).all()
    assert time.monotonic() - t0 < 30.0


def test_criterion_05_gradients_and_slice_locality():
    space = SearchSpace(layers=tuple(LayerSpec(6, 0, 6) for _ in range(3)),
                        input_dim=5, output_dim=3)
    principle = Principle(kind=BC)
    net = MiniNet.supernet(space, principle, util.substream(0, "init"))
    data = gaussian_blobs(5, 3, 64, 16, util.substream(0, "data"))
    x, y = data.x_train[:32], data.y_train[:32]
    width = (4, 2, 5)
    for side in ("left", "right"):
        path = path_slices(space, principle, width, side)
        err = grad_check(net, x, y, path, util.substream(0, f"probe-{side}"))
        assert err < 1e-4

    # one optimizer step through one side must leave every parameter outside
    # that side's slices bit-identical
    before_w = [w.copy() for w in net.weights]
    before_b = [b.copy() for b in net.biases]
    path = path_slices(space, principle, width, "left")
    grads = GradBatch(net)
    net.forward_backward(x, y, path, into=grads)
    net.sgd_step(grads, lr=0.1)
    touched = False
    for k, (in_sl, out_sl) in enumerate(path):
        wmask = np.zeros(before_w[k].shape, dtype=bool)
        wmask[out_sl, in_sl] = True
        bmask = np.zeros(before_b[k].shape, dtype=bool)
        bmask[out_sl] = True
        assert np.array_equal(net.weights[k][~wmask], before_w[k][~wmask])
        assert np.array_equal(net.biases[k][~bmask], before_b[k][~bmask])
        touched = touched or bool((net.weights[k][wmask] != before_w[k][wmask]).any())
    assert touched


def test_criterion_06_iterative_update_equivalence():
    """Alternating single-side updates agree with averaged both-path updates
    in expectation: over 10^4 paired batches the mean of the signed half
    differences stays within two standard errors of zero for every parameter
    block, and the single-side schedule needs at most 0.55x the peak
    activation memory."""
    space = SearchSpace(layers=(LayerSpec(8, 0, 4), LayerSpec(8, 0, 4)),
                        input_dim=6, output_dim=3)
    principle = Principle(kind=BC)
    data = gaussian_blobs(6, 3, 512, 128, util.substream(0, "data"))
    net = MiniNet.supernet(space, principle, util.substream(0, "init"))
    rng = util.substream(0, "pairs")

    n, batch = 10_000, 16
    nconn = len(net.weights)
    sums = np.zeros(2 * nconn)
    sqs = np.zeros(2 * nconn)
    for t in range(n):
        w = sample_uniform(space, rng)
        idx = rng.integers(len(data.x_train), size=batch)
        x, y = data.x_train[idx], data.y_train[idx]
        gl = GradBatch(net)
        net.forward_backward(x, y, path_slices(space, principle, w, "left"), into=gl)
        gr = GradBatch(net)
        net.forward_backward(x, y, path_slices(space, principle, w, "right"), into=gr)
        # the iterative schedule applies left on even steps, right on odd;
        # its deviation from the both-path mean is +/- half the side gap
        sign = 1.0 if t % 2 == 0 else -1.0
        for k in range(nconn):
            dw = 0.5 * sign * float(np.mean(gl.gw[k] - gr.gw[k]))
            db = 0.5 * sign * float(np.mean(gl.gb[k] - gr.gb[k]))
            sums[2 * k] += dw
            sqs[2 * k] += dw * dw
            sums[2 * k + 1] += db
            sqs[2 * k + 1] += db * db
    means = sums / n
    variances = (sqs - n * means**2) / (n - 1)
    ses = np.sqrt(variances / n)
    assert (np.abs(means) <= 2.0 * ses).all(), (np.abs(means) / ses).max()

    both = train_supernet(space, data, TrainConfig(
        epochs=2, batch_size=32, seed=1, principle=principle,
        update_mode=BOTH_PATHS))
    alt = train_supernet(space, data, TrainConfig(
        epochs=2, batch_size=32, seed=1, principle=principle,
        update_mode=ITERATIVE))
    assert alt.peak_activation / both.peak_activation <= 0.55


def _simplex_grid(k: int, steps: int = 20) -> np.ndarray:
    """All distributions over k cells with masses in multiples of 1/steps."""
    pts = []
    for combo in itertools.combinations(range(steps + k - 1), k - 1):
        prev = -1
        masses = []
        for c in combo:
            masses.append(c - prev - 1)
            prev = c
        masses.append(steps + k - 2 - prev)
        pts.append([m / steps for m in masses])
    return np.array(pts)


def _grid_oracle_min(space, table, e, budget):
    """Exhaustive min of expected error over the product of 0.05-step simplex
    grids subject to expected FLOPs <= budget (three layers, shared K')."""
    P = _simplex_grid(len(space.grids()[0]))
    model = BudgetModel(space, table)
    mats = [m for (_, _, m) in model.conns]
    f0 = P @ mats[0].ravel()         # input connection, depends on p0 only
    m1 = P @ mats[1] @ P.T           # (p0, p1)
    m2 = P @ mats[2] @ P.T           # (p1, p2)
    f3 = P @ mats[3].ravel()         # output connection, p2 only
    o0, o1, o2 = P @ e[0], P @ e[1], P @ e[2]
    best = np.inf
    for i in range(len(P)):
        flops = f0[i] + m1[i][:, None] + m2 + f3[None, :]
        obj = o0[i] + o1[:, None] + o2[None, :]
        mask = flops <= budget
        if mask.any():
            m = obj[mask].min()
            best = min(best, float(m))
    return best


def test_criterion_07_prior_solver_near_oracle():
    """Projected gradient lands within 1e-3 of the exhaustive 0.05-step
    simplex-grid optimum on four random instances, always returns feasible
    distributions, and its objective is monotone in the budget."""
    t0 = time.monotonic()
    space = SearchSpace(layers=tuple(LayerSpec(6, 0, 3) for _ in range(3)),
                        input_dim=4, output_dim=2)
    table = FlopsTable.from_dense(space)
    model = BudgetModel(space, table)
    lo, hi = table.min_total(), table.max_total()

    rng = np.random.default_rng(7)
    for trial, frac in enumerate([0.35, 0.5, 0.65, 0.8]):
        values = [rng.uniform(0.1, 1.0, size=3) for _ in range(3)]
        errors = ErrorTable(values=values,
                            counts=[np.ones(3, dtype=np.int64)] * 3)
        budget = int(lo + frac * (hi - lo))
        oracle = _grid_oracle_min(space, table, values, budget)
        result = solve_distribution(errors, space, table, budget, seed=trial)
        for d in result.distributions:
            assert abs(float(d.sum()) - 1.0) < 1e-9
            assert (d >= 0.0).all()
        assert model.expected(result.distributions) <= budget * 1.001
        assert result.objective <= oracle + 1e-3

    # a looser budget can only help
    values = [rng.uniform(0.1, 1.0, size=3) for _ in range(3)]
    errors = ErrorTable(values=values, counts=[np.ones(3, dtype=np.int64)] * 3)
    objectives = []
    for frac in (0.3, 0.45, 0.6, 0.75, 0.9):
        budget = int(lo + frac * (hi - lo))
        objectives.append(
            solve_distribution(errors, space, table, budget, seed=0).objective)
    for a, b in zip(objectives, objectives[1:]):
        assert b <= a + 1e-6
    assert time.monotonic() - t0 < 60.0


def test_criterion_08_search_beats_baselines_on_oracle():
    """On a 1,024-width space with a known synthetic fitness and a median
    FLOPs budget, evolution finds a true top-1% width in at least 9 of 10
    seeds, and mean final fitness orders greedy <= evolution <=
    prior-initialized evolution."""
    t0 = time.monotonic()
    space = SearchSpace(layers=tuple(LayerSpec(8, 0, 4) for _ in range(5)),
                        input_dim=6, output_dim=4)
    table = FlopsTable.from_dense(space)
    widths = sorted(space.enumerate_widths())
    assert len(widths) == 1024
    budget = int(np.median([table.total(w) for w in widths]))
    feasible = [w for w in widths if table.total(w) <= budget]
    fitness = synthetic_oracle(space, seed=0)
    ranked = sorted(feasible, key=fitness, reverse=True)
    top_1pct = set(ranked[:max(1, len(feasible) // 100)])

    def cfg(seed):
        return EvoConfig(population_size=40, iterations=80, survivors=10,
                         eta=4.0, seed=util.derive_seed(seed, "evo"))

    greedy = greedy_slim(space, table, budget, fitness)
    hits = 0
    evo_fits, prior_fits = [], []
    for seed in range(10):
        r = evolve(space, table, budget, fitness, cfg(seed))
        assert table.total(r.best_width) <= budget
        hits += r.best_width in top_1pct
        evo_fits.append(r.best_fitness)

        log = synthetic_losslog(space, fitness, n=2000, seed=seed)
        errors = build_error_table(log, space)
        prior = solve_distribution(errors, space, table, budget,
                                   seed=util.derive_seed(seed, "prior"),
                                   restarts=5, iters=600)
        pop = sample_population(prior, space, table, budget, 40,
                                util.substream(seed, "population"))
        rp = evolve(space, table, budget, fitness, cfg(seed),
                    initial_population=pop)
        prior_fits.append(rp.best_fitness)

    assert hits >= 9, f"top-1% hits {hits}/10"
    assert greedy.best_fitness <= np.mean(evo_fits) <= np.mean(prior_fits)
    assert time.monotonic() - t0 < 120.0


def test_criterion_09_bilateral_ranks_better_than_unilateral():
    """On an exhaustively retrained 64-width benchmark, the bilateral
    supernet's Kendall tau against ground truth beats the unilateral one on
    average over five supernet seeds, and is positive in every seed. The
    margin, not the absolute tau, is the claim."""
    t0 = time.monotonic()
    space = SearchSpace(layers=tuple(LayerSpec(16, 0, 4) for _ in range(3)),
                        input_dim=2, output_dim=3)
    table = FlopsTable.from_dense(space)
    data = two_spirals(3, 768, 384, util.substream(0, "data"))

    bench_cfg = TrainConfig(epochs=120, batch_size=32, lr=0.1, seed=0,
                            principle=Principle(kind=BC))
    bench = generate_benchmark(space, data, table, bench_cfg, num_seeds=3)
    assert len(bench.records) == 64

    def taus(kind, comp):
        out = []
        for seed in range(5):
            cfg = TrainConfig(epochs=30, batch_size=32, lr=0.1, seed=seed,
                              principle=Principle(kind=kind),
                              complementary=comp)
            result = train_supernet(space, data, cfg)
            score = score_supernet(result.net, space, cfg.principle, bench,
                                   data, table)
            out.append(score.correlation.kendall_tau)
        return out

    bc_taus = taus(BC, True)
    ua_taus = taus(UA, False)
    assert all(t > 0.0 for t in bc_taus), bc_taus
    assert np.mean(bc_taus) >= np.mean(ua_taus), (bc_taus, ua_taus)
    assert time.monotonic() - t0 < 600.0


def _ranks_with_ties(v):
    order = sorted(range(len(v)), key=lambda i: v[i])
    r = [0.0] * len(v)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1.0
        for k in range(i, j + 1):
            r[order[k]] = avg
        i = j + 1
    return r


def _pearson_definitional(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx * syy) ** 0.5


def _kendall_pairwise(x, y):
    n = len(x)
    conc = disc = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            sx = (x[i] > x[j]) - (x[i] < x[j])
            sy = (y[i] > y[j]) - (y[i] < y[j])
            if sx == 0:
                ties_x += 1
            if sy == 0:
                ties_y += 1
            if sx * sy > 0:
                conc += 1
            elif sx * sy < 0:
                disc += 1
    n0 = n * (n - 1) // 2
    return (conc - disc) / ((n0 - ties_x) * (n0 - ties_y)) ** 0.5


def test_criterion_10_correlations_match_brute_force():
    """Library correlations agree with independent definitional/O(n^2)
    implementations to 1e-12 on 1,000 random vectors, half tie-rich."""
    rng = np.random.default_rng(42)
    done = 0
    while done < 1000:
        n = int(rng.integers(3, 13))
        if done % 2 == 0:
            x = rng.integers(0, 5, size=n).astype(float)
            y = rng.integers(0, 5, size=n).astype(float)
        else:
            x = rng.normal(size=n)
            y = rng.normal(size=n)
        if len(set(x.tolist())) < 2 or len(set(y.tolist())) < 2:
            continue
        xs, ys = x.tolist(), y.tolist()
        assert abs(pearson(x, y) - _pearson_definitional(xs, ys)) <= 1e-12
        expected_rho = _pearson_definitional(_ranks_with_ties(xs),
                                             _ranks_with_ties(ys))
        assert abs(spearman(x, y) - expected_rho) <= 1e-12
        assert abs(kendall(x, y) - _kendall_pairwise(xs, ys)) <= 1e-12
        done += 1


def test_criterion_11_pipeline_reports_bit_identical(tmp_path, monkeypatch):
    space = SearchSpace(layers=(LayerSpec(4, 0, 2), LayerSpec(4, 0, 2)),
                        input_dim=5, output_dim=3)
    cfg = RunConfig(
        space=space,
        data=DataConfig(kind="blobs", n_train=192, n_val=64),
        train=TrainConfig(epochs=2, batch_size=32, seed=0,
                          principle=Principle(kind=BC)),
        evo=EvoConfig(population_size=4, iterations=3, survivors=1, seed=0),
        budget="1.0x",
        method="evo",
        seed=0,
    )

    reports = []
    for tag, threads in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "4")]:
        monkeypatch.setenv("WIDTHSEARCH_THREADS", threads)
        out = run_pipeline(cfg, str(tmp_path / tag))
        with open(os.path.join(out, "report.json"), "rb") as fh:
            reports.append(fh.read())
    assert reports[0] == reports[1] == reports[2] == reports[3]
    json.loads(reports[0])  # and it parses
