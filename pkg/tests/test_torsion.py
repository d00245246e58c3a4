import numpy as np
import pytest
import sympy as sp

from haantjes import torsion as ts
from haantjes.exprdsl import evaluate, parse
from haantjes.fields import OperatorField, VectorField, eval_operator, lie_bracket
from haantjes.harness import IDENTITIES, random_generic, random_scalar
from sym_oracle import at, binary_haantjes, fn, haantjes, nijenhuis, sym_matrix


def _pts(n, k=4, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, (k, n))


def _sym_components(fun, mats, n, pts):
    """c^i_{jk} from a symbolic tensor evaluated on natural-frame pairs."""
    e = [sp.Matrix([1 if r == j else 0 for r in range(n)]) for j in range(n)]
    out = np.zeros((len(pts), n, n, n))
    for j in range(n):
        for k in range(j + 1, n):
            vec = fun(*mats, e[j], e[k])
            for a, p in enumerate(pts):
                out[a, :, j, k] = at(vec, p)
                out[a, :, k, j] = -out[a, :, j, k]
    return out


ORACLE_CASES = [
    (2, 0), (2, 1), (3, 0), (3, 1),
]


@pytest.mark.parametrize("n,seed", ORACLE_CASES)
def test_nijenhuis_and_haantjes_match_symbolic_definition(n, seed):
    A = random_generic(np.random.default_rng(seed), n, 1)
    SA = sym_matrix(A.to_strings())
    pts = _pts(n, seed=seed)
    assert np.allclose(ts.nijenhuis(A, pts).comps, _sym_components(nijenhuis, [SA], n, pts), atol=1e-9)
    assert np.allclose(ts.haantjes(A, pts).comps, _sym_components(haantjes, [SA], n, pts), atol=1e-8)


@pytest.mark.parametrize("n,seed", ORACLE_CASES)
def test_fn_bracket_matches_symbolic_definition(n, seed):
    rng = np.random.default_rng(seed + 10)
    A, B = random_generic(rng, n, 1), random_generic(rng, n, 1)
    SA, SB = sym_matrix(A.to_strings()), sym_matrix(B.to_strings())
    pts = _pts(n, seed=seed)
    assert np.allclose(ts.fn_bracket(A, B, pts).comps, _sym_components(fn, [SA, SB], n, pts), atol=1e-9)


@pytest.mark.parametrize("n,seed", [(2, 0), (3, 0)])
def test_binary_haantjes_matches_symbolic_definition(n, seed):
    rng = np.random.default_rng(seed + 20)
    A, B = random_generic(rng, n, 1), random_generic(rng, n, 1)
    SA, SB = sym_matrix(A.to_strings()), sym_matrix(B.to_strings())
    pts = _pts(n, k=2, seed=seed)
    ref = _sym_components(binary_haantjes, [SA, SB], n, pts)
    assert np.allclose(ts.binary_haantjes(A, B, pts).comps, ref, atol=1e-7 * (1 + np.abs(ref).max()))


def test_worked_nijenhuis_example():
    # diag(x1, x2) has torsion-free coordinates; diag(x2, x1) does not
    flat = OperatorField.diagonal(["x1", "x2"])
    crossed = OperatorField.diagonal(["x2", "x1"])
    p = [0.3, 0.8]
    assert ts.nijenhuis(flat, p).max_abs() == 0.0
    assert ts.nijenhuis(crossed, p).max_abs() > 0.1
    # diagonal operators always have vanishing Haantjes torsion
    assert ts.haantjes(crossed, p).max_abs() < 1e-14


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_recursive_and_closed_form_levels_agree(n, m):
    A = random_generic(np.random.default_rng(100 + n), n, 1)
    pts = _pts(n, 6)
    rec, closed = ts.tau_level(A, m, pts), ts.tau_closed_form(A, m, pts)
    assert np.max(np.abs(rec.comps - closed.comps)) < 1e-8 * (1 + max(rec.scale, closed.scale))


@pytest.mark.parametrize("n", [2, 3])
def test_low_levels_are_nijenhuis_and_haantjes(n):
    A = random_generic(np.random.default_rng(n), n)
    pts = _pts(n)
    tower = ts.tau_tower(A, 3, pts)
    assert np.allclose(tower[0].comps, ts.nijenhuis(A, pts).comps)
    assert np.allclose(tower[1].comps, ts.haantjes(A, pts).comps)
    assert np.allclose(tower[2].comps, ts.tau_level(A, 3, pts).comps)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_binary_tower_on_the_diagonal(m):
    A = random_generic(np.random.default_rng(m), 3, 1)
    pts = _pts(3)
    H, T = ts.binary_level(A, A, m, pts), ts.tau_level(A, m, pts)
    assert np.max(np.abs(H.comps - 2 ** m * T.comps)) < 1e-8 * (1 + H.scale)


def test_delta_is_the_sum_remainder():
    rng = np.random.default_rng(7)
    A, B = random_generic(rng, 3), random_generic(rng, 3)
    pts = _pts(3)
    lhs = ts.haantjes(A + B, pts).comps
    rhs = (ts.haantjes(A, pts).comps + ts.haantjes(B, pts).comps
           + ts.binary_haantjes(A, B, pts).comps + ts.delta_tensor(A, B, pts).comps)
    assert np.max(np.abs(lhs - rhs)) < 1e-8 * (1 + np.abs(lhs).max())


@pytest.mark.parametrize("fn_name", ["fab_identity_residual", "fn_scaling_residual", "shift_identity_residual"])
def test_scaling_residuals_vanish(fn_name):
    rng = np.random.default_rng(3)
    A, B = random_generic(rng, 3), random_generic(rng, 3)
    f = random_scalar(rng, 3)
    r, s = getattr(ts, fn_name)(A, B, f, _pts(3), with_scale=True)
    assert r < 1e-8 * (1 + s)


def test_nijenhuis_scaling_residual_vanishes():
    rng = np.random.default_rng(4)
    r, s = ts.nijenhuis_scaling_residual(random_generic(rng, 3), random_scalar(rng, 3), _pts(3), with_scale=True)
    assert r < 1e-8 * (1 + s)


@pytest.mark.parametrize("bad", [0, -1])
def test_levels_below_one_are_rejected(bad):
    A = OperatorField.identity(2)
    for fun in (ts.tau_level, ts.tau_closed_form):
        with pytest.raises(ValueError):
            fun(A, bad, [0.0, 0.0])
    with pytest.raises(ValueError):
        ts.binary_level(A, A, bad, [0.0, 0.0])


def test_closed_form_refuses_high_levels():
    with pytest.raises(ValueError, match="tau_level"):
        ts.tau_closed_form(OperatorField.identity(2), ts.CLOSED_FORM_MAX_LEVEL + 1, [0.0, 0.0])


def test_tensors_are_skew():
    A = random_generic(np.random.default_rng(0), 3)
    T = ts.haantjes(A, _pts(3))
    assert np.array_equal(T.comps, -np.swapaxes(T.comps, -1, -2))


def test_sign_error_in_contraction_is_detected(monkeypatch):
    """A perturbed Haantjes contraction must break the affine scaling identity."""
    original = ts.haantjes_contraction

    def broken(V, T):
        comps, scale = original(V, T)
        return comps + 2 * np.einsum("...ia,...abk,...bj->...ijk", V, T, V), scale

    monkeypatch.setattr(ts, "haantjes_contraction", broken)
    r, s = IDENTITIES["haantjes_affine_scaling"](np.random.default_rng(0), 3, _pts(3, 10))
    assert r > 1e-3 * (1 + s)


def test_accepts_pre_evaluated_operator():
    A = random_generic(np.random.default_rng(1), 2)
    p = _pts(2)
    assert np.allclose(ts.nijenhuis(eval_operator(A, p)).comps, ts.nijenhuis(A, p).comps)


def test_scalar_operator_has_no_torsion():
    f = parse("exp(x1) * x2", 2)
    L = OperatorField.scalar(f, 2)
    T = ts.nijenhuis(L, _pts(2))
    assert T.max_abs() < 1e-12


def _bracket_nijenhuis(A, X, Y, pts):
    V = eval_operator(A, pts).value
    AX, AY = A @ X, A @ Y
    inner = lie_bracket(X, AY, pts) + lie_bracket(AX, Y, pts)
    return (lie_bracket(AX, AY, pts) + np.einsum("...ij,...j->...i", V @ V, lie_bracket(X, Y, pts))
            - np.einsum("...ij,...j->...i", V, inner))


def _bracket_fn(A, B, X, Y, pts):
    Av, Bv = eval_operator(A, pts).value, eval_operator(B, pts).value
    up = lambda M, v: np.einsum("...ij,...j->...i", M, v)
    return (lie_bracket(A @ X, B @ Y, pts) + lie_bracket(B @ X, A @ Y, pts)
            - up(Av, lie_bracket(X, B @ Y, pts) + lie_bracket(B @ X, Y, pts))
            - up(Bv, lie_bracket(X, A @ Y, pts) + lie_bracket(A @ X, Y, pts))
            + up(Av @ Bv + Bv @ Av, lie_bracket(X, Y, pts)))


@pytest.mark.parametrize("seed", range(3))
def test_tensoriality_with_scalar_absorbed(seed):
    rng = np.random.default_rng(seed)
    A, B = random_generic(rng, 3, 1), random_generic(rng, 3, 1)
    f = random_scalar(rng, 3, 2)
    pts = _pts(3, 6, seed)
    fv = np.asarray(evaluate(f, pts))[:, None]
    X, Y = VectorField.basis(1, 3), VectorField.basis(3, 3)
    fX = f * X
    for lhs, base in [
        (_bracket_nijenhuis(A, fX, Y, pts), ts.nijenhuis(A, pts).comps[:, :, 0, 2]),
        (_bracket_fn(A, B, fX, Y, pts), ts.fn_bracket(A, B, pts).comps[:, :, 0, 2]),
    ]:
        assert np.allclose(lhs, fv * base, atol=1e-9 * (1 + np.abs(lhs).max()))
