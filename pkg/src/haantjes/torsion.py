"""Nijenhuis/Haantjes torsions, Frölicher-Nijenhuis bracket and the binary tower.

Every tensor is produced from operator values and first partials by index
contraction; Lie brackets of derived fields are expanded through the product
rule, so no second derivatives are ever needed.

Operators can be passed either as an :class:`OperatorField` together with a
point (or batch of points), or as an already evaluated :class:`OpEval`.
"""
from __future__ import annotations

from math import comb

import numpy as np

from .exprdsl import Expr, as_expr, as_points, eval_dual
from .fields import OpEval, OperatorField, Tensor12, eval_operator, opeval_powers

CLOSED_FORM_MAX_LEVEL = 12


def _ev(A, p) -> OpEval:
    if isinstance(A, OpEval):
        return A
    if p is None:
        raise TypeError("a point is required when passing an OperatorField")
    return eval_operator(A, p)


def _pair(A, B, p):
    Aev, Bev = _ev(A, p), _ev(B, p)
    if Aev.dim != Bev.dim:
        raise ValueError("operators must share the chart dimension")
    return Aev, Bev


def _amax(*arrays) -> float:
    return max(float(np.max(np.abs(a), initial=0.0)) for a in arrays)


# ------------------------------------------------------------ contraction kernels


def _up(P, t):
    """(P t)^i_{jk} = P^i_a t^a_{jk}."""
    return np.einsum("...ia,...ajk->...ijk", P, t)


def _args(t, P, Q):
    """t(PX, QY)^i_{jk} = t^i_{ab} P^a_j Q^b_k; pass None for the identity."""
    if P is None and Q is None:
        return t
    if P is None:
        return np.einsum("...ijb,...bk->...ijk", t, Q)
    if Q is None:
        return np.einsum("...iak,...aj->...ijk", t, P)
    return np.einsum("...iab,...aj,...bk->...ijk", t, P, Q)


def _frame_bracket(P, JP, Q, JQ):
    """[P e_j, Q e_k]^i = P^a_j dQ^i_k/dx^a - Q^a_k dP^i_j/dx^a."""
    return np.einsum("...aj,...ika->...ijk", P, JQ) - np.einsum("...ak,...ija->...ijk", Q, JP)


def _d_sym(J):
    """[e_j, Q e_k] + [Q e_j, e_k] = dQ^i_k/dx^j - dQ^i_j/dx^k."""
    return np.swapaxes(J, -1, -2) - J


def nijenhuis_components(V, J):
    """Coordinate formula for the Nijenhuis torsion; returns (comps, scale)."""
    t1 = np.einsum("...ika,...aj->...ijk", J, V)
    t2 = np.einsum("...ija,...ak->...ijk", J, V)
    t3 = _up(V, _d_sym(J))
    return t1 - t2 - t3, _amax(t1, t2, t3)


def haantjes_contraction(V, T):
    """A^i_a A^a_b T^b_{jk} + T^i_{ab} A^a_j A^b_k - A^i_a (T^a_{bk} A^b_j + T^a_{jb} A^b_k)."""
    h1 = np.einsum("...ia,...ab,...bjk->...ijk", V, V, T)
    h2 = np.einsum("...iab,...aj,...bk->...ijk", T, V, V)
    h3 = np.einsum("...ia,...abk,...bj->...ijk", V, T, V)
    h4 = np.einsum("...ia,...ajb,...bk->...ijk", V, T, V)
    return h1 + h2 - (h3 + h4), _amax(h1, h2, h3, h4)


def torsion_step(V, t):
    """One level of the single-operator tower: A^2 t + t(AX,AY) - A(t(X,AY) + t(AX,Y))."""
    a = _up(V @ V, t)
    b = _args(t, V, V)
    c = _up(V, _args(t, None, V) + _args(t, V, None))
    return a + b - c, _amax(a, b, c)


def binary_step(P, Q, h):
    """One level of the binary tower (generalized Haantjes contraction of h)."""
    a = _up(P @ Q + Q @ P, h)
    b = _args(h, P, Q) + _args(h, Q, P)
    c = _up(P, _args(h, None, Q) + _args(h, Q, None))
    d = _up(Q, _args(h, None, P) + _args(h, P, None))
    return a + b - c - d, _amax(a, b, c, d)


def fn_components(Av, Aj, Bv, Bj):
    """Frölicher-Nijenhuis bracket on natural-frame pairs; returns (comps, scale)."""
    ab = _frame_bracket(Av, Aj, Bv, Bj)
    ba = _frame_bracket(Bv, Bj, Av, Aj)
    ta = _up(Av, _d_sym(Bj))
    tb = _up(Bv, _d_sym(Aj))
    return ab + ba - ta - tb, _amax(ab, ba, ta, tb)


# ------------------------------------------------------------ public operations


def nijenhuis(A, p=None) -> Tensor12:
    Aev = _ev(A, p)
    comps, scale = nijenhuis_components(Aev.value, Aev.jac)
    return Tensor12(comps, scale)


def haantjes(A, p=None) -> Tensor12:
    Aev = _ev(A, p)
    T = nijenhuis(Aev)
    comps, scale = haantjes_contraction(Aev.value, T.comps)
    return Tensor12(comps, max(scale, T.scale))


def fn_bracket(A, B, p=None) -> Tensor12:
    Aev, Bev = _pair(A, B, p)
    comps, scale = fn_components(Aev.value, Aev.jac, Bev.value, Bev.jac)
    return Tensor12(comps, scale)


def binary_level(A, B, m: int, p=None) -> Tensor12:
    """Binary Haantjes tensor of level m (level 1 is the FN bracket)."""
    if m < 1:
        raise ValueError("level must be >= 1")
    Aev, Bev = _pair(A, B, p)
    H = fn_bracket(Aev, Bev)
    comps, scale = H.comps, H.scale
    for _ in range(m - 1):
        comps, s = binary_step(Aev.value, Bev.value, comps)
        scale = max(scale, s)
    return Tensor12(comps, scale)


def binary_haantjes(A, B, p=None) -> Tensor12:
    return binary_level(A, B, 2, p)


def tau_level(A, m: int, p=None) -> Tensor12:
    """Generalized Nijenhuis torsion of level m (1: Nijenhuis, 2: Haantjes)."""
    if m < 1:
        raise ValueError("level must be >= 1 (level 0 is the bare commutator, not a tensor)")
    Aev = _ev(A, p)
    T = nijenhuis(Aev)
    comps, scale = T.comps, T.scale
    for _ in range(m - 1):
        comps, s = torsion_step(Aev.value, comps)
        scale = max(scale, s)
    return Tensor12(comps, scale)


def tau_tower(A, m_max: int, p=None) -> list:
    """[tau^(1), ..., tau^(m_max)] sharing one evaluation and recursion."""
    Aev = _ev(A, p)
    T = nijenhuis(Aev)
    out = [T]
    comps, scale = T.comps, T.scale
    for _ in range(m_max - 1):
        comps, s = torsion_step(Aev.value, comps)
        scale = max(scale, s)
        out.append(Tensor12(comps, scale))
    return out


def tau_closed_form(A, m: int, p=None) -> Tensor12:
    """Double binomial sum over A^{p+q} [A^{m-p} e_j, A^{m-q} e_k]."""
    if m < 1:
        raise ValueError("level must be >= 1")
    if m > CLOSED_FORM_MAX_LEVEL:
        raise ValueError(f"closed form refused above level {CLOSED_FORM_MAX_LEVEL}; use tau_level")
    Aev = _ev(A, p)
    pw = opeval_powers(Aev, 2 * m)
    total = 0.0
    scale = 0.0
    for a in range(m + 1):
        P = pw[m - a]
        for b in range(m + 1):
            Q = pw[m - b]
            coeff = (-1) ** (a + b) * comb(m, a) * comb(m, b)
            term = coeff * _up(pw[a + b].value, _frame_bracket(P.value, P.jac, Q.value, Q.jac))
            scale = max(scale, _amax(term))
            total = total + term
    return Tensor12(total, scale)


def _delta_half(Av, Bv, TA, TB, F):
    """The printed half of Delta_{A,B}; the full tensor adds its A<->B swap."""
    A2 = Av @ Av
    terms_pos = [
        _up(A2, TB), _up(A2, F), _up(Av @ Bv, TA + TB),
        _args(F, Av, Av), _args(TA, Av, Bv), _args(TA, Bv, Av), _args(TA, Bv, Bv),
    ]
    inner = (_args(F, Av, None) + _args(F, None, Av)
             + _args(TA, Bv, None) + _args(TA, None, Bv)
             + _args(TB, None, Av) + _args(TB, Av, None)
             + _args(TB, None, Bv) + _args(TB, Bv, None))
    neg = _up(Av, inner)
    return sum(terms_pos) - neg, _amax(neg, *terms_pos)


def delta_tensor(A, B, p=None) -> Tensor12:
    """Delta_{A,B}, the remainder in H_{A+B} = H_A + H_B + H_{A,B} + Delta_{A,B}."""
    Aev, Bev = _pair(A, B, p)
    TA, TB = nijenhuis(Aev), nijenhuis(Bev)
    F = fn_bracket(Aev, Bev)
    d1, s1 = _delta_half(Aev.value, Bev.value, TA.comps, TB.comps, F.comps)
    d2, s2 = _delta_half(Bev.value, Aev.value, TB.comps, TA.comps, F.comps)
    return Tensor12(d1 + d2, max(s1, s2, TA.scale, TB.scale, F.scale))


# ------------------------------------------------------------ f-scaling identities


def _scalar(f: Expr, pts):
    d = eval_dual(as_expr(f), pts)
    return np.asarray(d.value, dtype=float), np.asarray(d.partials, dtype=float)


def _xy_terms(scalars_and_ops):
    """sum_s c_s(e_k) C_s^i_j minus its j<->k swap, as a component array."""
    E = 0.0
    for s, C in scalars_and_ops:
        E = E + np.einsum("...k,...ij->...ijk", s, C)
    return E - np.swapaxes(E, -1, -2)


def _residual(lhs: Tensor12, rhs_comps, scale) -> tuple:
    diff = lhs.comps - rhs_comps
    return float(np.max(np.abs(diff), initial=0.0)), max(scale, lhs.scale, _amax(rhs_comps))


def fab_identity_residual(A: OperatorField, B: OperatorField, f, p, with_scale: bool = False):
    """Max-norm residual of the H_{fA,B} expansion in f, its derivatives and [A,B].

    The left side runs through the DSL (the operator f*A is built as an
    expression); the right side is assembled from H_{A,B}, f and grad f.
    """
    f = as_expr(f)
    pts = as_points(p, A.dim)
    lhs = binary_haantjes(f * A, B, pts)
    Aev, Bev = eval_operator(A, pts), eval_operator(B, pts)
    fv, grad = _scalar(f, pts)
    H = binary_haantjes(Aev, Bev)
    Av, Bv = Aev.value, Bev.value
    C = Av @ Bv - Bv @ Av
    ops = [
        (np.einsum("...a,...ak->...k", grad, Bv), Av @ C - C @ Av),
        (grad, Bv @ C @ Av - Av @ Bv @ C),
        (-np.einsum("...a,...ak->...k", grad, Bv @ Av), C),
        (np.einsum("...a,...ak->...k", grad, Av), Bv @ C),
    ]
    extra = fv[..., None, None, None] * _xy_terms(ops)
    rhs = (fv ** 2)[..., None, None, None] * H.comps + extra
    r, s = _residual(lhs, rhs, max(H.scale, _amax(extra)))
    return (r, s) if with_scale else r


def fn_scaling_residual(A: OperatorField, B: OperatorField, f, p, with_scale: bool = False):
    """Residual of [[fA, B]] = f [[A, B]] + (BX)(f) AY - X(f) BAY - (BY)(f) AX + Y(f) BAX."""
    f = as_expr(f)
    pts = as_points(p, A.dim)
    lhs = fn_bracket(f * A, B, pts)
    Aev, Bev = eval_operator(A, pts), eval_operator(B, pts)
    fv, grad = _scalar(f, pts)
    F = fn_bracket(Aev, Bev)
    Av, Bv = Aev.value, Bev.value
    ops = [
        (-np.einsum("...a,...ak->...k", grad, Bv), Av),
        (grad, Bv @ Av),
    ]
    extra = _xy_terms(ops)
    rhs = fv[..., None, None, None] * F.comps + extra
    r, s = _residual(lhs, rhs, max(F.scale, _amax(extra)))
    return (r, s) if with_scale else r


def nijenhuis_scaling_residual(A: OperatorField, g, p, with_scale: bool = False):
    """Residual of T_{gA} = g^2 T_A + g((AX)(g) AY - (AY)(g) AX + Y(g) A^2 X - X(g) A^2 Y)."""
    g = as_expr(g)
    pts = as_points(p, A.dim)
    lhs = nijenhuis(g * A, pts)
    Aev = eval_operator(A, pts)
    gv, grad = _scalar(g, pts)
    T = nijenhuis(Aev)
    Av = Aev.value
    ops = [
        (-np.einsum("...a,...ak->...k", grad, Av), Av),
        (grad, Av @ Av),
    ]
    extra = gv[..., None, None, None] * _xy_terms(ops)
    rhs = (gv ** 2)[..., None, None, None] * T.comps + extra
    r, s = _residual(lhs, rhs, max(T.scale, _amax(extra)))
    return (r, s) if with_scale else r


def shift_identity_residual(A: OperatorField, B: OperatorField, f, p, with_scale: bool = False):
    """Residual of the H_{A + fI, B} expansion.

    H_{A+fI,B} - H_{A,B} - H_{fI,B} = Y(f) B[A,B]X - (BY)(f) [A,B]X - (X <-> Y).
    """
    f = as_expr(f)
    pts = as_points(p, A.dim)
    n = A.dim
    fI = OperatorField.scalar(f, n)
    lhs = binary_haantjes(A + fI, B, pts)
    Aev, Bev = eval_operator(A, pts), eval_operator(B, pts)
    H = binary_haantjes(Aev, Bev)
    HfI = binary_haantjes(fI, B, pts)
    _, grad = _scalar(f, pts)
    Av, Bv = Aev.value, Bev.value
    C = Av @ Bv - Bv @ Av
    ops = [
        (grad, Bv @ C),
        (-np.einsum("...a,...ak->...k", grad, Bv), C),
    ]
    extra = _xy_terms(ops)
    rhs = H.comps + HfI.comps + extra
    r, s = _residual(lhs, rhs, max(H.scale, HfI.scale, _amax(extra)))
    return (r, s) if with_scale else r


__all__ = [
    "nijenhuis", "haantjes", "fn_bracket", "binary_haantjes", "binary_level",
    "tau_level", "tau_tower", "tau_closed_form", "delta_tensor",
    "fab_identity_residual", "fn_scaling_residual", "nijenhuis_scaling_residual",
    "shift_identity_residual", "CLOSED_FORM_MAX_LEVEL",
]
