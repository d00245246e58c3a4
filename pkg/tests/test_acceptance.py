"""Acceptance gate: one test per criterion; a PASS/FAIL line per criterion is
printed in the terminal summary."""
import json
import subprocess
import sys

import numpy as np
import pytest

from expr_gen import random_expressions
from haantjes import cli, harness, integrability, spectral
from haantjes import torsion as ts
from haantjes.exprdsl import eval_dual, grad_fd, to_string
from haantjes.fields import Tensor12, VectorField, eval_operator, lie_bracket

TOL = 1e-8


def _ok(r, s):
    return r < TOL * (1 + s)


@pytest.mark.criterion(1, "golden example: tau3 = 0, tau1 and tau2 nonzero, Riesz (2,1), D1 involutive")
def test_golden_example():
    out = harness.golden_example_check(count=10, seed=0)
    assert out["checks"] == {k: True for k in out["checks"]}, out["checks"]
    assert len(out["points"]) == 10
    assert all(np.all(np.abs(p) <= 1) for p in out["points"])
    # the bundled definition file gives the same picture through the CLI layer
    d = cli.load_definition(example="golden")
    bundled = harness.golden_example_check(points=d.points, operator=d.operators["L"])
    assert bundled["passed"], bundled["checks"]
    assert bundled["tau1_max"] > 1e-3 and bundled["tau2_max"] > 1e-3
    assert bundled["tau3"]["max_residual"] < TOL * (1 + bundled["tau3"]["scale"])


@pytest.mark.criterion(2, "identity regression: 25 identities x 20 instances x 20 points, n = 2, 3, 4")
def test_identity_regression():
    rep = harness.identity_suite(trials=20, seed=0, dims=(2, 3, 4), n_points=20, tol=TOL)
    assert len(rep.records) == 25 * 3
    assert all(r.trials == 20 for r in rep.records)
    bad = [(r.name, r.dim, r.relative) for r in rep.failures()]
    assert rep.passed, bad


def _definitional_nijenhuis(A, pts):
    """T(e_j, e_k) = [Ae_j, Ae_k] - A([e_j, Ae_k] + [Ae_j, e_k]) from vector-field brackets."""
    n = A.dim
    e = [VectorField.basis(i, n) for i in range(1, n + 1)]
    V = eval_operator(A, pts).value
    comps = np.zeros(pts.shape[:-1] + (n, n, n))
    for j in range(n):
        for k in range(j + 1, n):
            Aj, Ak = A.column(j), A.column(k)
            inner = lie_bracket(e[j], Ak, pts) + lie_bracket(Aj, e[k], pts)
            comps[..., :, j, k] = lie_bracket(Aj, Ak, pts) - np.einsum("...ia,...a->...i", V, inner)
    return Tensor12(comps)


@pytest.mark.criterion(3, "evaluator equivalence: recursive vs closed-form levels, and definitional level 1")
def test_evaluator_equivalence():
    for n in (2, 3, 4):
        for trial in range(3):
            rng = np.random.default_rng([3, n, trial])
            A = harness.random_generic(rng, n, 2)
            pts = rng.uniform(-1, 1, (20, n))
            for m in (1, 2, 3, 4):
                rec, closed = ts.tau_level(A, m, pts), ts.tau_closed_form(A, m, pts)
                assert _ok(np.abs(rec.comps - closed.comps).max(), max(rec.scale, closed.scale)), (n, m)
            ref = _definitional_nijenhuis(A, pts)
            for T in (ts.tau_level(A, 1, pts), ts.tau_closed_form(A, 1, pts)):
                assert _ok(np.abs(T.comps - ref.comps).max(), max(T.scale, ref.scale)), n


@pytest.mark.criterion(4, "autodiff oracle: dual gradients vs central differences on 100 random expressions")
def test_autodiff_oracle():
    exprs = random_expressions(100, seed=2024)
    pts = np.random.default_rng(4).uniform(-1, 1, (100, 3))
    worst = max(
        (float(np.abs(eval_dual(e, p).partials - grad_fd(e, p)).max()), to_string(e)) for e, p in zip(exprs, pts)
    )
    assert worst[0] < 1e-6, worst


@pytest.mark.criterion(5, "triangular theorems: nilcyclic per-k and full vanishing, one-eigenvalue clauses")
def test_triangular_theorems():
    for n in (3, 4):
        for trial in range(50):
            rng = np.random.default_rng([5, n, trial])
            A = harness.random_strictly_upper(rng, n, 2)
            out = integrability.triangular_vanishing_check(A, rng.uniform(-1, 1, (10, n)))
            assert out["theorem_applies"] and out["holds"], (n, trial, out)
        for trial in range(20):
            rng = np.random.default_rng([55, n, trial])
            f, A, _ = harness.random_one_eigenvalue(rng, n, 2)
            out = integrability.one_eigenvalue_triangular_check(A, f, rng.uniform(-1, 1, (10, n)))
            assert out["theorem_applies"] and out["holds"], (n, trial, out)


@pytest.mark.criterion(6, "Jordan-chain expansion oracle for m = 2, 3 on 10 constructions")
def test_jordan_expansion():
    cases = [(2, (2,))]  # the 2x2 single block with a variable eigenvalue
    cases += [(3, (2, 1)), (3, (3,)), (3, (1, 1, 1)), (4, (2, 2)), (4, (3, 1)),
              (4, (4,)), (4, (2, 1, 1)), (3, None), (4, None)]
    assert len(cases) == 10
    for idx, (n, blocks) in enumerate(cases):
        rng = np.random.default_rng([6, idx])
        jc = harness.random_jordan(rng, n, blocks=blocks)
        pts = rng.uniform(-1, 1, (10, n))
        assert all(spectral.verify_jordan_chain(jc.operator, c, pts) < 1e-9 for c in jc.chains)
        for m in (2, 3):
            for cx in jc.chains:
                for cy in jc.chains:
                    r, s = integrability.jordan_expansion_residual(jc.operator, cx, cy, m, pts, with_scale=True)
                    assert _ok(r, s), (n, blocks, m, r, s)
    variable = harness.random_jordan(np.random.default_rng([6, 0]), 2, blocks=(2,))
    assert variable.eigenvalues[0].max_coord() > 0


@pytest.mark.criterion(7, "kernel specialization: tau^(m)(X, Y) = A^(2m)[X, Y] on ker A, m = 1, 2, 3")
def test_kernel_specialization():
    for trial in range(6):
        rng = np.random.default_rng([7, trial])
        n = 3 + trial % 2
        build = harness.rank_one_construction if trial < 3 else harness.kernel_construction
        A, frame = build(rng, n)
        pts = rng.uniform(-1, 1, (10, n))
        assert len(frame) >= 2
        for m in (1, 2, 3):
            for a in range(len(frame)):
                for b in range(a + 1, len(frame)):
                    r, s = integrability.kernel_bracket_residual(A, frame[a], frame[b], m, pts, with_scale=True)
                    assert _ok(r, s), (trial, m, r, s)


@pytest.mark.criterion(8, "soundness sweep: zero contradictions over 100 trials")
def test_soundness_sweep():
    out = harness.soundness_sweep(trials=100, seed=0)
    assert out["trials"] == 100
    assert out["scan_found"] > 0
    checked = [r for r in out["rows"] if r["smallest_m"] is not None and r["checks"]]
    assert checked, "no trial reached the distribution checks"
    assert out["contradictions"] == 0


@pytest.mark.criterion(9, "conjecture probes: 50 trials each at n = 3, zero counterexample candidates")
def test_conjecture_probes():
    spec = harness.GeneratorSpec("commuting_nilpotent_pair", 3)
    p1 = harness.conjecture1_probe(spec, trials=50)
    p2 = harness.conjecture2_probe(spec, trials=50)
    assert p1.trials == p2.trials == 50
    assert p1.qualifying > 0 and p2.qualifying > 0
    assert p1.candidates == [] and p2.candidates == []


DETERMINISM_COMMANDS = [
    ["eval", "--example", "golden", "--tensor", "tau", "--level", "3", "--points", "10", "--seed", "9"],
    ["eval", "--example", "golden", "--tensor", "haantjes"],
    ["spectrum", "--example", "golden"],
    ["integrability", "--example", "golden"],
    ["probe", "--conjecture", "1", "--trials", "10", "--seed", "4"],
    ["probe", "--conjecture", "2", "--trials", "10", "--seed", "4"],
    ["suite", "--trials", "2", "--dims", "2,3", "--points", "5"],
]


@pytest.mark.criterion(10, "determinism: identical seeds and inputs reproduce reports byte for byte")
def test_determinism(tmp_path):
    for i, argv in enumerate(DETERMINISM_COMMANDS):
        outs = []
        for rep in range(2):
            path = tmp_path / f"{i}_{rep}.json"
            cli.main(argv + ["--out", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1], argv
        assert json.loads(outs[0])["command"] == argv[0]
    # a fresh interpreter produces the same bytes as the in-process run
    proc = subprocess.run([sys.executable, "-m", "haantjes", *DETERMINISM_COMMANDS[0]],
                          capture_output=True, check=True)
    assert proc.stdout == (tmp_path / "0_0.json").read_bytes()
