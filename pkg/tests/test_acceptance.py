"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE k: PASS|FAIL`` line (visible with or
without ``-s``) before asserting.
"""

import json
import math
import re
import time

import numpy as np
import pytest

from conftest import UNIT_VARIANCE_SPECS, random_gaussian, random_root_mixture
from smoothmix import cli, oracle
from smoothmix.errors import DivergenceError
from smoothmix.gaussian import product
from smoothmix.optimizer import Evaluator, Options, Problem, solve
from smoothmix.root import component_count, expand, fisher_information_root, inverse_count

EXAMPLE_1_DOC = {
    "dim": 1,
    "root_components": 3,
    "specs": [
        {"type": "moment", "order": 1, "target": 0.0},
        {"type": "moment", "order": 2, "kind": "central", "target": 1.0},
    ],
}


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


def sup_distance_to_standard_normal(mix):
    x = np.linspace(-4.0, 4.0, 801)
    return float(np.max(np.abs(mix.pdf(x) - np.exp(-x * x / 2) / math.sqrt(2 * math.pi))))


def test_fisher_closed_form_matches_quadrature(report):
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(50):
        rm = random_root_mixture(rng, 1 + k % 2, 1 + (k // 2) % 4)
        closed = fisher_information_root(rm)
        for quad in (oracle.fi_root_quadrature(rm), oracle.fi_mixture_quadrature(expand(rm))):
            worst = max(worst, abs(quad - closed) / closed)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 60
    report(1, ok, f"worst relative difference {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_gaussian_product_identity(report):
    rng = np.random.default_rng(1002)
    worst_point = worst_integral = 0.0
    for k in range(100):
        dim = 1 + k % 2
        g1, g2 = random_gaussian(rng, dim), random_gaussian(rng, dim)
        scale, g3 = product(g1, g2)
        sd = np.sqrt(np.diag(g3.cov))
        axis = np.linspace(-4.0, 4.0, 41)
        if dim == 1:
            pts = g3.mean + sd * axis[:, None]
        else:
            grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
            pts = g3.mean + sd * grid
        lhs = g1.pdf(pts) * g2.pdf(pts)
        rhs = scale * g3.pdf(pts)
        worst_point = max(worst_point, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
        qs = oracle.QuadratureSpec.for_components(np.stack([g1.mean, g2.mean]), np.stack([g1.cov, g2.cov]))
        total = oracle.integrate(lambda p: g1.pdf(p) * g2.pdf(p), qs)
        worst_integral = max(worst_integral, abs(total - scale) / scale)
    ok = worst_point <= 1e-12 and worst_integral <= 1e-10
    report(2, ok, f"pointwise {worst_point:.2e}, integral {worst_integral:.2e}")
    assert ok


def test_expansion_exact(report):
    rng = np.random.default_rng(1003)
    worst = 0.0
    counts_ok = True
    for n in range(1, 7):
        for dim in (1, 2):
            rm = random_root_mixture(rng, dim, n)
            mix = expand(rm)
            if dim == 1:
                pts = np.linspace(-6.0, 6.0, 201)[:, None]
            else:
                pts = rng.uniform(-4.0, 4.0, size=(201, 2))
            worst = max(worst, float(np.max(np.abs(rm(pts) ** 2 - mix.pdf(pts)))))
            counts_ok &= mix.n_components == n * (n + 1) // 2 == component_count(n)
    table = {3: 6, 4: 10, 5: 15}
    counts_ok &= all(component_count(r) == m and inverse_count(m) == r for r, m in table.items())
    ok = worst < 1e-10 and counts_ok
    report(3, ok, f"max |r^2 - f| {worst:.2e}, counts {'agree' if counts_ok else 'DISAGREE'}")
    assert ok


def test_unit_variance_reproduction(report, unit_variance_chain):
    opts = Options()
    fi = {n: sol.fisher_information for n, (sol, _) in unit_variance_chain.items()}
    sol5 = unit_variance_chain[5][0]
    sup = sup_distance_to_standard_normal(sol5.mixture)
    converged = all(sol.converged for sol, _ in unit_variance_chain.values())
    slowest = max(t for _, t in unit_variance_chain.values())
    monotone = fi[4] <= fi[3] + 1e-8 and fi[5] <= fi[4] + 1e-8
    worst_bound = math.inf
    worst_cramer_rao = math.inf
    for n, (sol, _) in unit_variance_chain.items():
        ev = Evaluator(Problem(1, n, UNIT_VARIANCE_SPECS))
        for h in sol.history:
            if h["violation"] > opts.eq_tol:
                continue
            st = ev.state(h["theta"][None, :])
            exp = st.expansion
            var = float(np.sum(exp.weights * (exp.covs[..., 0, 0] + exp.means[..., 0] ** 2))
                        - np.sum(exp.weights * exp.means[..., 0]) ** 2)
            worst_bound = min(worst_bound, h["fisher"] - (1.0 - opts.eq_tol))
            worst_cramer_rao = min(worst_cramer_rao, h["fisher"] * var - (1.0 - 1e-12))
    ok = (converged and 1.0 <= fi[5] <= 1.05 and sup <= 0.01 and monotone
          and worst_bound >= 0 and worst_cramer_rao >= 0 and slowest < 60)
    report(4, ok, f"FI(3,4,5)=({fi[3]:.12f}, {fi[4]:.12f}, {fi[5]:.12f}), sup-norm {sup:.2e}, "
                  f"bound margin {worst_bound:.2e}, FI*var margin {worst_cramer_rao:.2e}, slowest R {slowest:.1f} s")
    assert ok


def test_value_pair_reproduction(report, value_pair_chain):
    fi = {n: sol.fisher_information for n, (sol, _) in value_pair_chain.items()}
    converged = all(sol.converged for sol, _ in value_pair_chain.values())
    worst = max(sol.max_violation for sol, _ in value_pair_chain.values())
    total = sum(t for _, t in value_pair_chain.values())
    monotone = fi[4] <= fi[3] + 1e-8 and fi[5] <= fi[4] + 1e-8
    ok = converged and worst <= 1e-6 and monotone and total < 120
    report(5, ok, f"FI(3,4,5)=({fi[3]:.10f}, {fi[4]:.10f}, {fi[5]:.10f}), "
                  f"max residual {worst:.2e}, {total:.1f} s")
    assert ok


def test_empty_problem_diverges(report, tmp_path, capsys):
    problem = Problem(1, 3, [])
    starts = []
    raised = False
    try:
        solve(problem, callback=starts.append)
    except DivergenceError:
        raised = True
    budget = all(r.outer <= problem.options.max_outer and not r.converged for r in starts)
    path = tmp_path / "empty.json"
    path.write_text(json.dumps({"dim": 1, "root_components": 3, "specs": []}))
    code = cli.main(["solve", str(path), "--quiet"])
    capsys.readouterr()
    ok = raised and budget and code == cli.EXIT_FAILED
    report(6, ok, f"DivergenceError {'raised' if raised else 'NOT raised'}, {len(starts)} starts within budget: "
                  f"{budget}, CLI exit {code}")
    assert ok


def test_entropy_and_curvature_contrast(report, unit_variance_chain, curvature_solution):
    target = 0.5 * math.log(2 * math.pi * math.e)
    entropy = oracle.entropy_quadrature(unit_variance_chain[5][0].mixture)
    curvature = curvature_solution
    sup = sup_distance_to_standard_normal(curvature.mixture)
    ok = abs(entropy - target) <= 0.01 and curvature.converged and sup > 0.05
    report(7, ok, f"entropy error {abs(entropy - target):.2e}, curvature fit converged={curvature.converged}, "
                  f"sup-norm to N(0,1) {sup:.4f} (needs > 0.05)")
    assert ok


def test_cli_deterministic(report, tmp_path):
    problem = tmp_path / "problem.json"
    problem.write_text(json.dumps(EXAMPLE_1_DOC))
    outputs = []
    for run in ("a", "b"):
        out, plot = tmp_path / f"{run}.json", tmp_path / f"{run}_plot"
        code = cli.main(["solve", str(problem), "--out", str(out), "--plot", str(plot), "--seed", "11", "--quiet"])
        assert code == cli.EXIT_OK
        text = re.sub(r'"timestamp": "[^"]*"', '"timestamp": ""', out.read_text(encoding="utf-8"))
        outputs.append((text.encode(), (tmp_path / f"{run}_plot.csv").read_bytes()))
    ok = outputs[0] == outputs[1]
    report(8, ok, f"solution and plot files {'identical' if ok else 'DIFFER'} modulo timestamp")
    assert ok
