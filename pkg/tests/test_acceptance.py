"""End-to-end acceptance checks, one test per criterion.

Run ``pytest tests/test_acceptance.py`` (or this file directly); the session
summary lists one PASS/FAIL line per criterion.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from farsa.cli import compare_metric
from farsa.core import CompositeObjective, prox_step, prox_update
from farsa.exceptions import LibSVMParseError
from farsa.io import GROUP_FRACTIONS, LAMBDA_SCALES, assign_groups, lambda_min, load_libsvm
from farsa.losses import LogisticLoss
from farsa.solver import OPTIMAL, SolveOptions, solve, solve_baseline_pg

from acceptance_log import criterion
from instances import (
    check_report,
    logistic_instance,
    planted_quadratic,
    quadratic_instance,
    random_logistic_data,
    random_partition,
    random_quadratic,
)
from oracles import central_gradient, composite_value, directional_derivative, prox_bruteforce

DATA = Path(__file__).parent / "data"

pytestmark = pytest.mark.acceptance


def lemma_instance(rng):
    """Small quadratic or logistic objective with a random partition and a test point."""
    n = int(rng.integers(2, 11))
    k = int(rng.integers(1, min(4, n) + 1))
    part = random_partition(rng, n, k, weight_range=(0.05, 2.0))
    if rng.random() < 0.5:
        loss = random_quadratic(rng, n, cond=float(rng.choice([2.0, 30.0])))
    else:
        X, y = random_logistic_data(rng, 30, n)
        loss = LogisticLoss(X, y)
    obj = CompositeObjective(loss, part)
    x = rng.standard_normal(n) * rng.choice([0.1, 1.0, 3.0])
    for i in range(k):
        if rng.random() < 0.3:
            x[part.groups[i]] = 0.0
    return obj, x


def composite(obj):
    groups, weights = obj.partition.groups, obj.partition.weights
    return lambda z: composite_value(obj.loss, groups, weights, z)


@criterion(1, "prox update matches per-group brute-force minimisation")
def test_criterion_01_prox_oracle():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        k = int(rng.integers(1, min(4, n) + 1))
        obj = quadratic_instance(rng, n, k, weight_range=(0.01, 3.0))
        alpha = float(rng.uniform(0.0, 1.0)) or 1.0
        x = rng.standard_normal(n) * rng.choice([0.1, 1.0, 5.0])
        v = x - alpha * obj.gradient(x)
        part = obj.partition
        expected = np.zeros(n)
        blocks = prox_bruteforce([v[g] for g in part.groups], alpha, part.weights)
        for g, block in zip(part.groups, blocks):
            expected[g] = block
        worst = max(worst, float(np.max(np.abs(prox_update(x, alpha, obj) - expected))))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-6, f"max l_inf gap {worst:.2e}"
    assert elapsed < 5.0, f"took {elapsed:.2f}s"


@criterion(2, "PG step descent, subspace descent, known-L decrease and gradient bound")
def test_criterion_02_lemma_suite():
    rng = np.random.default_rng(202)
    rel = 1e-3
    steps = groups_checked = 0
    for _ in range(500):
        obj, x = lemma_instance(rng)
        F = composite(obj)
        part = obj.partition
        alpha = float(rng.uniform(0.01, 1.0))
        s = prox_step(x, alpha, obj)
        if not np.any(s):
            continue
        bound = -float(s @ s) / alpha
        dd = directional_derivative(F, x, s)
        assert dd <= bound + rel * abs(bound) + 1e-9, f"full step: {dd} > {bound}"
        steps += 1

        # any union of groups
        subset = rng.random(part.n_groups) < 0.5
        ps = np.where(part.coord_mask(subset), s, 0.0)
        if np.any(ps):
            bound = -float(ps @ ps) / alpha
            dd = directional_derivative(F, x, ps)
            assert dd <= bound + rel * abs(bound) + 1e-9, f"projected step: {dd} > {bound}"

        # gradient bound on groups that stay away from zero
        for i, g in enumerate(part.groups):
            if np.any(x[g]) and np.any(x[g] + s[g]):
                gi = central_gradient(F, x)[g]
                assert np.linalg.norm(gi) >= np.linalg.norm(s[g]) * (1 - rel), f"group {i}"
                groups_checked += 1
    assert steps >= 450 and groups_checked >= 300, (steps, groups_checked)

    # known-L decrease, exact arithmetic up to rounding
    for _ in range(100):
        n = int(rng.integers(2, 11))
        k = int(rng.integers(1, min(4, n) + 1))
        obj = CompositeObjective(random_quadratic(rng, n, cond=20.0, scale=float(rng.uniform(0.5, 5))),
                                 random_partition(rng, n, k, weight_range=(0.05, 2.0)))
        L = obj.loss.lipschitz_bound
        x = rng.standard_normal(n)
        for factor in (0.1, 0.5, 0.9, 1.5, 1.9):
            alpha = factor / L
            s = prox_step(x, alpha, obj)
            subset = rng.random(k) < 0.6
            ps = np.where(obj.partition.coord_mask(subset), s, 0.0)
            F0, F1 = obj.value(x), obj.value(x + ps)
            decrease = (1 / alpha - L / 2) * float(ps @ ps)
            assert F1 <= F0 - decrease + 1e-12 * max(1.0, abs(F0)), f"alpha={factor}/L"


def run_collection():
    """Diverse end-to-end runs used for the accounting checks."""
    rng = np.random.default_rng(303)
    runs = []
    variants = [SolveOptions(), SolveOptions(alpha_update="basic"), SolveOptions(phi=0.7),
                SolveOptions(phi_switch=True), SolveOptions(kappa2_rescale=False, q=2.0)]
    for j in range(10):
        opts = variants[j % len(variants)]
        obj = logistic_instance(rng, 80, 20, fraction=GROUP_FRACTIONS[j % 4],
                                lambda_scale=LAMBDA_SCALES[j % 2], sparse=bool(j % 2))
        runs.append((obj, solve(obj, options=opts, seed=j)))
        qobj = quadratic_instance(rng, 12, 4, cond=50.0, weight_range=(0.1, 3.0))
        runs.append((qobj, solve(qobj, rng.standard_normal(12) * 3, opts)))
        pobj, _, _ = planted_quadratic(rng, 6)
        runs.append((pobj, solve(pobj, rng.standard_normal(pobj.n), opts)))
        runs.append((obj, solve_baseline_pg(obj, max_iter=500)))
    return runs


@criterion(3, "objective non-increasing, counters partition iterations, new_zero adds zeros")
def test_criterion_03_monotonicity_and_flags():
    runs = run_collection()
    problems = []
    for idx, (obj, rep) in enumerate(runs):
        problems += [f"run {idx}: {p}" for p in check_report(rep, obj)]
    assert not problems, "; ".join(problems[:3])
    assert any(rep.counters["cg_new_zero"] for _, rep in runs)
    assert any(rep.counters["pg_decrease_alpha"] for _, rep in runs)


@criterion(4, "PG parameter floor and decrease count with the basic update")
def test_criterion_04_alpha_floor():
    rng = np.random.default_rng(404)
    # the floor argument divides by xi, so the decrease factor is set to xi
    opts = SolveOptions(alpha_update="basic", xi=0.5, zeta=0.5)
    checked = 0
    for j in range(20):
        n = int(rng.integers(4, 16))
        k = int(rng.integers(1, n + 1))
        obj = CompositeObjective(random_quadratic(rng, n, cond=100.0, scale=float(10 ** rng.uniform(0, 3))),
                                 random_partition(rng, n, k, weight_range=(0.05, 2.0)))
        L = obj.loss.lipschitz_bound
        alpha0 = 1.0 if j % 2 == 0 else None
        rep = solve(obj, rng.standard_normal(n), opts, alpha0=alpha0, seed=j)
        a0 = rep.alpha_initial
        floor = min(a0, 2 * opts.xi * (1 - opts.eta) / L)
        lowest = min([a0] + [r.alpha for r in rep.trace])
        assert lowest >= floor - 1e-12, f"alpha {lowest} below {floor}"
        bound = max(0, math.ceil(math.log(a0 * L / (2 * (1 - opts.eta))) / math.log(1 / opts.xi)))
        assert rep.counters["pg_decrease_alpha"] <= bound
        checked += rep.counters["pg_decrease_alpha"] > 0
    assert checked >= 5, "too few runs exercised a decrease"

    # with the default factor zeta >= xi the floor still holds; only the count bound needs zeta = xi
    default = SolveOptions(alpha_update="basic")
    for j in range(10):
        obj = CompositeObjective(random_quadratic(rng, 8, cond=100.0, scale=float(10 ** rng.uniform(1, 3))),
                                 random_partition(rng, 8, 4))
        rep = solve(obj, rng.standard_normal(8), default, alpha0=1.0)
        floor = min(1.0, 2 * default.xi * (1 - default.eta) / obj.loss.lipschitz_bound)
        assert min(r.alpha for r in rep.trace) >= floor - 1e-12


@criterion(5, "agreement with baseline PG on 20 logistic instances")
def test_criterion_05_solution_agreement():
    rng = np.random.default_rng(2024)
    combos = [(f, s) for f in GROUP_FRACTIONS for s in LAMBDA_SCALES]
    start = time.perf_counter()
    for k in range(20):
        fraction, scale = combos[k % len(combos)]
        N, n = int(rng.integers(100, 301)), int(rng.integers(10, 41))
        obj = logistic_instance(rng, N, n, fraction=fraction, lambda_scale=scale, sparse=bool(k % 2))
        rep = solve(obj)
        base = solve_baseline_pg(obj, tol=1e-10)
        assert rep.status == OPTIMAL and base.status == OPTIMAL, f"instance {k}"
        gap = abs(rep.objective_final - base.objective_final)
        assert gap <= 1e-6, f"instance {k}: objective gap {gap:.2e}"
        part = obj.partition
        assert np.array_equal(part.zero_groups(rep.x_final), part.zero_groups(base.x_final)), \
            f"instance {k}: zero-group pattern differs"
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


@criterion(6, "planted group support identified in at least 19 of 20 instances")
def test_criterion_06_support_identification():
    rng = np.random.default_rng(606)
    hits = 0
    for _ in range(20):
        n_groups = int(rng.integers(4, 13))
        obj, x_star, support = planted_quadratic(rng, n_groups, group_size=int(rng.integers(1, 5)),
                                                 margin=0.5)
        rep = solve(obj, rng.standard_normal(obj.n))
        found = ~obj.partition.zero_groups(rep.x_final)
        hits += rep.status == OPTIMAL and np.array_equal(found, support)
    assert hits >= 19, f"{hits}/20"


def error_ratios(errors, floor):
    return [errors[k + 1] / errors[k] for k in range(len(errors) - 1) if errors[k + 1] >= floor]


@criterion(7, "superlinear tail with q = 2 and tight CG residuals")
def test_criterion_07_superlinear_tail():
    opts = SolveOptions(q=2.0, cg_target_power=2.0, cg_target_floor=1e-15, tol_rel=1e-12,
                        record_history=True)
    for seed in range(5):
        rng = np.random.default_rng(700 + seed)
        obj, x_star, _ = planted_quadratic(rng, 8, group_size=3, cond=20.0)
        base = solve_baseline_pg(obj, tol=1e-14)
        # the planted minimiser is exact; the high-accuracy baseline must agree with it
        assert np.linalg.norm(base.x_final - x_star) <= 1e-12
        rep = solve(obj, 2 * rng.standard_normal(obj.n), opts)
        assert rep.status == OPTIMAL
        errors = np.array([np.linalg.norm(h - x_star) for h in rep.history])
        ratios = error_ratios(errors, 1e-14 * max(1.0, np.linalg.norm(x_star)))[-3:]
        assert len(ratios) == 3
        assert all(r < 0.5 for r in ratios), f"seed {seed}: ratios {ratios}"
        assert ratios[0] > ratios[1] > ratios[2], f"seed {seed}: ratios {ratios}"
        first = int(np.argmax(errors <= 1e-3))
        assert errors[first] <= 1e-3
        assert errors[first:first + 4].min() <= 1e-10, f"seed {seed}: errors {errors[first:first + 4]}"


@criterion(8, "logistic gradient, HVP symmetry and curvature clamp")
def test_criterion_08_gradient_hvp_numerics():
    rng = np.random.default_rng(808)
    for j in range(50):
        n = int(rng.integers(2, 12))
        X, y = random_logistic_data(rng, 40, n, density=0.6 if j % 2 else None)
        loss = LogisticLoss(sp.csr_matrix(X) if j % 2 else X, y)
        x = rng.standard_normal(n)
        g = loss.gradient(x)
        fd = central_gradient(loss.value, x)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-12) + 1e-10
        idx = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        op = loss.hessian_operator(x, idx)
        u, v = rng.standard_normal(idx.size), rng.standard_normal(idx.size)
        a, b = u @ op(v), v @ op(u)
        assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-300)

    delta = 1e-8
    X = np.array([[40.0, 0.0], [0.0, 1.0], [-60.0, 1.0]])
    y = np.array([1.0, 1.0, -1.0])
    loss = LogisticLoss(X, y, delta=delta)
    x = np.array([1.0, 0.0])
    w = loss.curvature_weights(x)
    # margins 40 and 60 saturate; sigma (1 - sigma) there is far below delta
    assert w[0] == delta and w[2] == delta
    assert w[1] == pytest.approx(0.25)
    H = (X.T * w) @ X / 3
    np.testing.assert_allclose(loss.hvp(x, np.array([0, 1]), np.array([1.0, -2.0])),
                               H @ np.array([1.0, -2.0]), rtol=1e-12)


@criterion(9, "zero solution above lambda_min, nonzero below")
def test_criterion_09_lambda_min_threshold():
    rng = np.random.default_rng(909)
    for j in range(10):
        n = int(rng.integers(4, 30))
        X, y = random_logistic_data(rng, int(rng.integers(30, 150)), n)
        loss = LogisticLoss(X, y)
        part = assign_groups(n, max(1, int(GROUP_FRACTIONS[j % 4] * n)))
        lam0 = lambda_min(loss, part)
        above = CompositeObjective(loss, part.with_weights(1.01 * lam0 * np.sqrt(part.sizes)))
        for x0 in (None, rng.standard_normal(n)):
            rep = solve(above, x0)
            assert rep.status == OPTIMAL and not np.any(rep.x_final), f"instance {j}"
        below = CompositeObjective(loss, part.with_weights(0.5 * lam0 * np.sqrt(part.sizes)))
        rep = solve(below)
        assert rep.status == OPTIMAL and np.any(rep.x_final), f"instance {j}"


@criterion(10, "LIBSVM golden files, worked grouping example, comparison metric")
def test_criterion_10_io_and_metric():
    ds = load_libsvm(DATA / "small.libsvm")
    assert ds.labels.tolist() == [1.0, -1.0, 1.0, -1.0]
    np.testing.assert_array_equal(ds.features.toarray(), [
        [0.5, 0.0, -2.0], [0.0, 0.0, 0.0], [0.0, 1.25, 4.0], [-1.0, 2.0, 0.0]])
    gz = load_libsvm(DATA / "small.libsvm.gz")
    np.testing.assert_array_equal(gz.features.toarray(), ds.features.toarray())
    for name, line in (("bad_value.libsvm", 3), ("duplicate.libsvm", 2),
                       ("zero_index.libsvm", 2), ("bad_token.libsvm", 1)):
        with pytest.raises(LibSVMParseError) as err:
            load_libsvm(DATA / name)
        assert err.value.lineno == line, name

    assert [g.tolist() for g in assign_groups(10, 3).groups] == [[0, 1, 2], [3, 4, 5], [6, 7, 8, 9]]

    assert compare_metric(1.0, 2.0) == pytest.approx(1.0)
    assert compare_metric(4.0, 1.0) == pytest.approx(-2.0)
    assert compare_metric(2.5, 2.5) == 0.0
    assert compare_metric(None, 5.0) == -10.0
    assert compare_metric(5.0, 1.0, failed_b=True) == 10.0
    assert compare_metric(1e-4, 1.0) == 10.0


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
