"""Symbolic reference implementations used as an independent oracle.

Everything here works on sympy matrices of expressions and follows the
coordinate-free definitions (Lie brackets of vector fields), not the
component formulas used by the package.
"""
import sympy as sp

SYMS = sp.symbols("x1:9")


def sym(text, dim):
    return sp.sympify(text.replace("^", "**"), locals={"ln": sp.log, **{f"x{i+1}": SYMS[i] for i in range(dim)}})


def sym_matrix(rows):
    n = len(rows)
    return sp.Matrix([[sym(str(e), n) for e in row] for row in rows])


def bracket(X, Y, n):
    xs = SYMS[:n]
    return sp.Matrix([
        sum(X[a] * sp.diff(Y[i], xs[a]) - Y[a] * sp.diff(X[i], xs[a]) for a in range(n))
        for i in range(n)
    ])


def nijenhuis(A, X, Y):
    n = A.shape[0]
    return (bracket(A * X, A * Y, n) + A * A * bracket(X, Y, n)
            - A * (bracket(X, A * Y, n) + bracket(A * X, Y, n)))


def fn(A, B, X, Y):
    n = A.shape[0]
    return (bracket(A * X, B * Y, n) + bracket(B * X, A * Y, n)
            - A * (bracket(X, B * Y, n) + bracket(B * X, Y, n))
            - B * (bracket(X, A * Y, n) + bracket(A * X, Y, n))
            + (A * B + B * A) * bracket(X, Y, n))


def haantjes(A, X, Y):
    T = lambda u, v: nijenhuis(A, u, v)
    return A * A * T(X, Y) + T(A * X, A * Y) - A * (T(X, A * Y) + T(A * X, Y))


def binary_haantjes(A, B, X, Y):
    F = lambda u, v: fn(A, B, u, v)
    return ((A * B + B * A) * F(X, Y) + F(A * X, B * Y) + F(B * X, A * Y)
            - A * (F(X, B * Y) + F(B * X, Y)) - B * (F(X, A * Y) + F(A * X, Y)))


def at(expr_vec, point):
    sub = {SYMS[i]: point[i] for i in range(len(point))}
    return [float(sp.N(e.subs(sub))) for e in expr_vec]
