"""Acceptance suite: one test per criterion, one printed line each.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the lines.
"""

import statistics
import time

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import GRADCHECK, TIGHT, fd_param_gradient, max_rel_error
from diffcone.canon import (
    ConeProgramData,
    build_asa,
    canonicalize,
    lower,
    materialize,
)
from diffcone.cones import (
    ConeBlock,
    ConeSpec,
    dproject,
    dual_block,
    project,
    smooth_margin,
)
from diffcone.derivatives import adjoint_derivative, forward_derivative
from diffcone.expressions import norm2, parameter, sum_entries, variable
from diffcone.fixtures import (
    gen_random_dpp,
    gradient_fixtures,
    ball_constrained_policy_fixture,
    oracle_eq_qp,
    oracle_lp_vertex,
)
from diffcone.layer import Layer
from diffcone.problem import Problem, ge, substitute_parameters
from diffcone.solver import normalized_point, solve


def report(number, name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number}/8 {name}: {status}{suffix}")
    assert passed, f"criterion {number} failed{suffix}"


def sample_values(problem, rng):
    out = {}
    for p in problem.parameters:
        v = rng.standard_normal(p.shape.dims)
        out[p.name] = np.abs(v) if p.nonneg else (-np.abs(v) if p.nonpos else v)
    return out


def test_criterion_1_worked_example_blocks():
    """Canonicalizing the regularized least-squares program (n=2, m=3)
    reproduces the displayed block structure exactly."""
    start = time.perf_counter()
    n, m = 2, 3
    x = variable("x", n)
    F = parameter("F", (m, n))
    g = parameter("g", m)
    lam = parameter("lam", nonneg=True)
    prob = Problem("minimize", norm2(F @ x - g) + lam * norm2(x), [ge(x, 0)])
    asa = canonicalize(prob)
    rng = np.random.default_rng(0)
    values = {"F": rng.standard_normal((m, n)),
              "g": rng.standard_normal(m), "lam": 0.7}
    data = materialize(asa, asa.flatten_params(values))

    ok = asa.cones == ConeSpec(0, n, (m + 1, n + 1))
    # documented permutation: canonical rows are (orthant, soc1, soc2);
    # the displayed form lists soc1, soc2, then the orthant block
    rows = np.arange(2 * n + m + 2)
    perm = np.concatenate([rows[n:], rows[:n]])
    A = data.A.toarray()[perm]
    b = data.b[perm]
    expect_A = np.zeros((2 * n + m + 2, n + 2))
    expect_A[0, 0] = -1.0
    expect_A[1:m + 1, 2:] = -values["F"]
    expect_A[m + 1, 1] = -1.0
    expect_A[m + 2:m + 2 + n, 2:] = -np.eye(n)
    expect_A[m + 2 + n:, 2:] = -np.eye(n)
    expect_b = np.zeros(2 * n + m + 2)
    expect_b[1:m + 1] = -values["g"]
    expect_c = np.zeros(n + 2)
    expect_c[0], expect_c[1] = 1.0, values["lam"]
    ok = ok and np.array_equal(A, expect_A) and np.array_equal(b, expect_b) \
        and np.array_equal(data.c, expect_c)
    elapsed = time.perf_counter() - start
    report(1, "worked-example canonical blocks", ok and elapsed < 1.0,
           f"{elapsed:.2f}s, zero tolerance")


def test_criterion_2_caching_equivalence():
    """Cached materialization equals fresh canonicalization entrywise on
    100 random programs x 10 parameter draws."""
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for seed in range(100):
        prob = gen_random_dpp(seed, n_vars=1 + seed % 3, n_params=seed % 4)
        asa = canonicalize(prob)
        for _ in range(10):
            values = sample_values(prob, rng)
            cached = materialize(asa, asa.flatten_params(values))
            fresh_asa = canonicalize(substitute_parameters(prob, values))
            fresh = materialize(fresh_asa, np.zeros(0))
            worst = max(
                worst,
                float(np.max(np.abs(cached.A.toarray() - fresh.A.toarray()),
                             initial=0.0)),
                float(np.max(np.abs(cached.b - fresh.b), initial=0.0)),
                float(np.max(np.abs(cached.c - fresh.c), initial=0.0)),
            )
    elapsed = time.perf_counter() - start
    report(2, "caching equivalence on random programs",
           worst <= 1e-14 and elapsed < 60.0,
           f"max abs diff {worst:.2e}, {elapsed:.1f}s")


def test_criterion_3_cached_materialization_speedup():
    """On the control-policy program, cached materialization beats full
    canonicalization by at least 5x (10-run medians)."""
    start = time.perf_counter()
    fx = ball_constrained_policy_fixture()
    values = fx.sample(np.random.default_rng(3))
    asa = canonicalize(fx.problem)
    theta = asa.flatten_params(values)
    full, cached = [], []
    for _ in range(10):
        t0 = time.perf_counter()
        materialize(build_asa(lower(fx.problem)), theta)
        full.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        materialize(asa, theta)
        cached.append(time.perf_counter() - t0)
    ratio = statistics.median(full) / statistics.median(cached)
    elapsed = time.perf_counter() - start
    report(3, "cached materialization speedup", ratio >= 5.0 and elapsed < 30,
           f"{ratio:.0f}x, {elapsed:.1f}s")


def test_criterion_4_gradient_correctness():
    """Backward matches central differences (h=1e-6, solver tol 1e-10) to
    1e-4 max relative error at 20 nondegenerate points per fixture."""
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = {}
    for fx in gradient_fixtures():
        layer = Layer.compile(fx.problem, GRADCHECK)
        fixture_worst = 0.0
        points = 0
        attempts = 0
        while points < 20 and attempts < 200:
            attempts += 1
            values = fx.sample(rng)
            res = layer.forward(values)
            if not res.ok:
                continue
            z = res._z
            if smooth_margin(z, res._data.cones,
                             res._data.A.shape[1]) <= 1e-6:
                continue  # skip degenerate draws before asserting
            cot = {fx.output:
                   rng.standard_normal(res.outputs[fx.output].shape)}
            grads, _ = layer.backward(res, cot)
            for name in layer.parameter_order:
                fd = fd_param_gradient(layer, values, cot, name, h=1e-6)
                fixture_worst = max(fixture_worst,
                                    max_rel_error(fd, grads[name]))
            points += 1
        worst[fx.name] = fixture_worst
        assert points == 20, f"{fx.name}: only {points} nondegenerate points"
    elapsed = time.perf_counter() - start
    overall = max(worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(4, "gradient correctness on layer fixtures",
           overall <= 1e-4 and elapsed < 600.0,
           f"max rel err {overall:.2e}; {detail}; {elapsed:.0f}s")


def test_criterion_5_adjoint_consistency():
    """<VJP(dx), ddata> matches <dx, JVP(ddata)> to 1e-7 relative over 100
    random trials."""
    start = time.perf_counter()
    rng = np.random.default_rng(23)
    fixtures = gradient_fixtures()
    trials = 0
    attempts = 0
    worst = 0.0
    while trials < 100 and attempts < 500:
        attempts += 1
        fx = fixtures[attempts % len(fixtures)]
        layer = Layer.compile(fx.problem, GRADCHECK)
        values = fx.sample(rng)
        asa = layer.asa
        data = materialize(asa, asa.flatten_params(values))
        sol = solve(data, GRADCHECK)
        if sol.status != "optimal":
            continue
        z = normalized_point(sol)
        if smooth_margin(z, data.cones, data.A.shape[1]) <= 1e-6:
            continue
        m, n = data.A.shape
        dx = rng.standard_normal(n)
        dA = sp.csr_matrix((rng.standard_normal(data.A.nnz),
                            data.A.indices.copy(), data.A.indptr.copy()),
                           shape=(m, n))
        db = rng.standard_normal(m)
        dc = rng.standard_normal(n)
        adj = adjoint_derivative(data, sol, dx)
        fwd = forward_derivative(data, sol, dA, db, dc)
        lhs = float(np.sum(adj.dA.multiply(dA)) + adj.db @ db + adj.dc @ dc)
        rhs = float(dx @ fwd.dx)
        rel = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, rel)
        trials += 1
    elapsed = time.perf_counter() - start
    report(5, "forward/adjoint pairing",
           trials == 100 and worst <= 1e-7 and elapsed < 120.0,
           f"{trials} trials, max rel {worst:.2e}, {elapsed:.0f}s")


def test_criterion_6_solver_correctness():
    """Solver vs vertex-enumeration, KKT, and analytic-projection oracles."""
    start = time.perf_counter()
    rng = np.random.default_rng(31)
    worst = 0.0

    # LPs against vertex enumeration
    checked = 0
    while checked < 10:
        n, mi = 2, 4
        G = np.vstack([rng.standard_normal((mi, n)), np.eye(n), -np.eye(n)])
        h = np.concatenate([rng.standard_normal(mi) + 1.5, np.full(2 * n, 5.0)])
        c = rng.standard_normal(n)
        data = ConeProgramData(sp.csr_matrix(G), h, c,
                               ConeSpec(0, G.shape[0], ()))
        sol = solve(data, TIGHT)
        if sol.status != "optimal":
            continue
        want = oracle_lp_vertex(c, G, h)
        worst = max(worst, float(np.max(np.abs(sol.x - want))))
        checked += 1

    # equality-constrained QPs against the KKT oracle
    for _ in range(10):
        n, meq = 3, 1
        q = rng.standard_normal(n)
        A = rng.standard_normal((meq, n))
        b = rng.standard_normal(meq)
        x_want, _ = oracle_eq_qp(np.eye(n), q, A, b)
        soc = np.zeros((2 + n, n + 1))
        soc[0, n] = -1.0
        soc[1, n] = 1.0
        soc[2:, :n] = -2.0 * np.eye(n)
        data = ConeProgramData(
            sp.csr_matrix(np.vstack([np.hstack([A, np.zeros((meq, 1))]), soc])),
            np.concatenate([b, [1.0, 1.0], 2.0 * q]),
            np.concatenate([np.zeros(n), [1.0]]),
            ConeSpec(meq, 0, (2 + n,)))
        sol = solve(data, TIGHT)
        assert sol.status == "optimal"
        worst = max(worst, float(np.max(np.abs(sol.x[:n] - x_want))))

    # projection layers against their analytic oracles
    for fx in gradient_fixtures():
        if fx.oracle is None:
            continue
        layer = Layer.compile(fx.problem, TIGHT)
        for _ in range(5):
            values = fx.sample(rng)
            res = layer.forward(values)
            assert res.ok
            want = fx.oracle(values)
            for name, arr in want.items():
                worst = max(worst,
                            float(np.max(np.abs(res.outputs[name] - arr))))
    elapsed = time.perf_counter() - start
    report(6, "solver vs independent oracles",
           worst <= 1e-5 and elapsed < 120.0,
           f"max abs err {worst:.2e}, {elapsed:.0f}s")


def test_criterion_7_degenerate_fallback():
    """A degenerate program with duplicated active rows yields finite
    gradients with the least-squares fallback flagged; no crash."""
    start = time.perf_counter()
    t = parameter("t")
    x = variable("x")
    prob = Problem("minimize", sum_entries(x), [ge(x, t), ge(x, t)])
    layer = Layer.compile(prob, TIGHT)
    res = layer.forward({"t": 2.0})
    ok = res.ok
    grads, info = layer.backward(res, {"x": np.asarray(1.0)})
    finite = np.all(np.isfinite(np.atleast_1d(grads["t"])))
    # both rows shared the bound: total sensitivity is exactly 1
    total_ok = abs(float(grads["t"]) - 1.0) <= 1e-6
    elapsed = time.perf_counter() - start
    report(7, "degenerate least-squares fallback",
           bool(ok and finite and info.get("fallback") and total_ok
                and elapsed < 10.0),
           f"grad {float(grads['t']):.6f}, fallback={info.get('fallback')}, "
           f"{elapsed:.1f}s")


def test_criterion_8_cone_property_suite():
    """Idempotence, nonexpansiveness, Moreau, Jacobian symmetry, and
    finite-difference agreement at 1000 random points per cone kind."""
    start = time.perf_counter()
    rng = np.random.default_rng(41)
    blocks = [ConeBlock("zero", 4), ConeBlock("free", 4),
              ConeBlock("nonneg", 5), ConeBlock("soc", 4)]
    ok = True
    h = 1e-6
    for block in blocks:
        dual = dual_block(block)
        smooth_checked = 0
        for i in range(1000):
            v = 2.0 * rng.standard_normal(block.dim)
            p = project(block, v)
            ok &= bool(np.linalg.norm(project(block, p) - p) <= 1e-12)
            u = 2.0 * rng.standard_normal(block.dim)
            ok &= bool(np.linalg.norm(project(block, u) - p)
                       <= np.linalg.norm(u - v) + 1e-12)
            ok &= bool(np.linalg.norm((project(block, v)
                                       - project(dual, -v)) - v) <= 1e-12)
            a = rng.standard_normal(block.dim)
            b = rng.standard_normal(block.dim)
            lhs = float(dproject(block, v, a) @ b)
            rhs = float(a @ dproject(block, v, b))
            ok &= bool(abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs)))
            # finite differences only away from the nonsmooth set
            if block.kind == "soc":
                if abs(np.linalg.norm(v[1:]) - abs(v[0])) < 1e-3:
                    continue
            elif block.kind == "nonneg" and np.min(np.abs(v)) < 1e-3:
                continue
            dv = rng.standard_normal(block.dim)
            fd = (project(block, v + h * dv)
                  - project(block, v - h * dv)) / (2 * h)
            got = dproject(block, v, dv)
            denom = max(1.0, float(np.max(np.abs(fd))))
            ok &= bool(np.max(np.abs(got - fd)) / denom <= 1e-5)
            smooth_checked += 1
        ok &= smooth_checked > 700
    elapsed = time.perf_counter() - start
    report(8, "cone geometry property suite", ok and elapsed < 60.0,
           f"{elapsed:.0f}s")
