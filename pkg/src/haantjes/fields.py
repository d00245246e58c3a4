"""Operator fields, vector fields and pointwise (1,2) tensors on a chart.

Index conventions follow the usual coordinate ones: ``A.value[..., i, j]`` is
``A^i_j`` and ``A.jac[..., i, j, a]`` is ``dA^i_j/dx^a``.  A :class:`Tensor12`
stores ``c^i_{jk}`` as ``comps[..., i, j, k]``.  Any leading axes are batch
axes over sample points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .exprdsl import Const, Coord, Expr, as_expr, as_points, eval_dual, is_constant, parse


def _as_entry(e, dim: int) -> Expr:
    if isinstance(e, str):
        return parse(e, dim)
    e = as_expr(e)
    if e.max_coord() > dim:
        raise ValueError(f"expression {e} uses coordinates beyond dimension {dim}")
    return e


@dataclass(frozen=True)
class VectorField:
    dim: int
    components: tuple

    def __post_init__(self):
        comps = tuple(_as_entry(c, self.dim) for c in self.components)
        if len(comps) != self.dim:
            raise ValueError(f"vector field needs {self.dim} components, got {len(comps)}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def basis(cls, i: int, dim: int) -> "VectorField":
        """Natural frame field e_i (1-based)."""
        return cls(dim, tuple(Const(1.0 if k == i else 0.0) for k in range(1, dim + 1)))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.dim, tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.dim, tuple(a - b for a, b in zip(self.components, other.components)))

    def __rmul__(self, f) -> "VectorField":
        f = as_expr(f)
        return VectorField(self.dim, tuple(f * c for c in self.components))

    def __neg__(self):
        return VectorField(self.dim, tuple(-c for c in self.components))

    def value(self, p) -> np.ndarray:
        return eval_vector(self, p)[0]

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.components) + ")"


def eval_vector(X: VectorField, p):
    """Return (value[..., i], jac[..., i, a]) of a vector field at ``p``."""
    pts = as_points(p, X.dim)
    n = X.dim
    batch = pts.shape[:-1]
    value = np.zeros(batch + (n,))
    jac = np.zeros(batch + (n, n))
    for i, c in enumerate(X.components):
        if isinstance(c, Const):
            value[..., i] = c.value
            continue
        d = eval_dual(c, pts)
        value[..., i] = d.value
        jac[..., i, :] = d.partials
    return value, jac


@dataclass(frozen=True)
class OperatorField:
    """n x n matrix of expressions; entry (i, j) is A^i_j."""

    dim: int
    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(_as_entry(e, self.dim) for e in row) for row in self.entries)
        if len(rows) != self.dim or any(len(r) != self.dim for r in rows):
            raise ValueError(f"operator must be {self.dim}x{self.dim}")
        object.__setattr__(self, "entries", rows)

    # -- constructors
    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], dim: int | None = None) -> "OperatorField":
        dim = len(rows) if dim is None else dim
        return cls(dim, tuple(tuple(r) for r in rows))

    @classmethod
    def identity(cls, dim: int) -> "OperatorField":
        return cls.scalar(Const(1.0), dim)

    @classmethod
    def zeros(cls, dim: int) -> "OperatorField":
        return cls.scalar(Const(0.0), dim)

    @classmethod
    def scalar(cls, f, dim: int) -> "OperatorField":
        f = _as_entry(f, dim)
        return cls(dim, tuple(tuple(f if i == j else Const(0.0) for j in range(dim)) for i in range(dim)))

    @classmethod
    def diagonal(cls, diag: Sequence) -> "OperatorField":
        dim = len(diag)
        d = [_as_entry(e, dim) for e in diag]
        return cls(dim, tuple(tuple(d[i] if i == j else Const(0.0) for j in range(dim)) for i in range(dim)))

    @classmethod
    def constant(cls, matrix) -> "OperatorField":
        m = np.asarray(matrix, dtype=float)
        return cls(m.shape[0], tuple(tuple(Const(float(v)) for v in row) for row in m))

    # -- structure
    def __getitem__(self, ij) -> Expr:
        i, j = ij
        return self.entries[i][j]

    @cached_property
    def is_diagonal(self) -> bool:
        return all(self.entries[i][j].is_zero for i in range(self.dim) for j in range(self.dim) if i != j)

    @cached_property
    def is_strictly_upper(self) -> bool:
        return all(self.entries[i][j].is_zero for i in range(self.dim) for j in range(i + 1))

    @cached_property
    def is_constant(self) -> bool:
        return all(is_constant(e) for row in self.entries for e in row)

    # -- algebra (expression level; used to build test operators)
    def __add__(self, other: "OperatorField") -> "OperatorField":
        self._check(other)
        return OperatorField(self.dim, tuple(
            tuple(a + b for a, b in zip(ra, rb)) for ra, rb in zip(self.entries, other.entries)))

    def __sub__(self, other: "OperatorField") -> "OperatorField":
        self._check(other)
        return OperatorField(self.dim, tuple(
            tuple(a - b for a, b in zip(ra, rb)) for ra, rb in zip(self.entries, other.entries)))

    def __neg__(self):
        return OperatorField(self.dim, tuple(tuple(-a for a in r) for r in self.entries))

    def __rmul__(self, f) -> "OperatorField":
        f = as_expr(f)
        return OperatorField(self.dim, tuple(tuple(f * a for a in r) for r in self.entries))

    def __matmul__(self, other):
        if isinstance(other, VectorField):
            return self.apply(other)
        self._check(other)
        n = self.dim
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                acc: Expr = Const(0.0)
                for a in range(n):
                    acc = acc + self.entries[i][a] * other.entries[a][j]
                row.append(acc)
            rows.append(tuple(row))
        return OperatorField(n, tuple(rows))

    def power(self, k: int) -> "OperatorField":
        out = OperatorField.identity(self.dim)
        for _ in range(k):
            out = out @ self
        return out

    def apply(self, X: VectorField) -> VectorField:
        n = self.dim
        comps = []
        for i in range(n):
            acc: Expr = Const(0.0)
            for a in range(n):
                acc = acc + self.entries[i][a] * X.components[a]
            comps.append(acc)
        return VectorField(n, tuple(comps))

    def column(self, j: int) -> VectorField:
        """The vector field A e_j (0-based column index)."""
        return VectorField(self.dim, tuple(self.entries[i][j] for i in range(self.dim)))

    def _check(self, other):
        if not isinstance(other, OperatorField) or other.dim != self.dim:
            raise ValueError("operator fields must share the chart dimension")

    def to_strings(self) -> list:
        return [[str(e) for e in row] for row in self.entries]

    def __str__(self):
        return "[" + "; ".join(", ".join(str(e) for e in row) for row in self.entries) + "]"


@dataclass(frozen=True)
class OpEval:
    value: np.ndarray  # [..., i, j]
    jac: np.ndarray  # [..., i, j, alpha]

    @property
    def dim(self) -> int:
        return self.value.shape[-1]

    def __getitem__(self, idx) -> "OpEval":
        """Select sample points from a batched evaluation."""
        return OpEval(self.value[idx], self.jac[idx])


def eval_operator(A: OperatorField, p) -> OpEval:
    pts = as_points(p, A.dim)
    n = A.dim
    batch = pts.shape[:-1]
    value = np.zeros(batch + (n, n))
    jac = np.zeros(batch + (n, n, n))
    cache = {}
    for i in range(n):
        for j in range(n):
            e = A.entries[i][j]
            if isinstance(e, Const):
                value[..., i, j] = e.value
                continue
            if isinstance(e, Coord):
                value[..., i, j] = pts[..., e.index - 1]
                jac[..., i, j, e.index - 1] = 1.0
                continue
            d = cache.get(e)
            if d is None:
                d = cache[e] = eval_dual(e, pts)
            value[..., i, j] = d.value
            jac[..., i, j, :] = d.partials
    return OpEval(value, jac)


def opeval_power(Aev: OpEval, k: int) -> OpEval:
    """k-th matrix power with its exact Jacobian (product rule)."""
    if k < 0:
        raise ValueError("power must be non-negative")
    n = Aev.dim
    batch = Aev.value.shape[:-2]
    value = np.broadcast_to(np.eye(n), batch + (n, n)).copy()
    jac = np.zeros(batch + (n, n, n))
    for _ in range(k):
        # d(P A) = dP A + P dA
        jac = np.einsum("...iba,...bj->...ija", jac, Aev.value) + np.einsum("...ib,...bja->...ija", value, Aev.jac)
        value = value @ Aev.value
    return OpEval(value, jac)


def opeval_powers(Aev: OpEval, kmax: int) -> list:
    """[A^0, A^1, ..., A^kmax] as OpEvals."""
    out = [opeval_power(Aev, 0)]
    for _ in range(kmax):
        prev = out[-1]
        jac = (np.einsum("...iba,...bj->...ija", prev.jac, Aev.value)
               + np.einsum("...ib,...bja->...ija", prev.value, Aev.jac))
        out.append(OpEval(prev.value @ Aev.value, jac))
    return out


def matrix_power_dual(A: OperatorField, k: int, p) -> OpEval:
    return opeval_power(eval_operator(A, p), k)


def lie_bracket(X: VectorField, Y: VectorField, p) -> np.ndarray:
    """[X, Y]^i = X^a dY^i/dx^a - Y^a dX^i/dx^a."""
    if X.dim != Y.dim:
        raise ValueError("vector fields must share the chart dimension")
    xv, xj = eval_vector(X, p)
    yv, yj = eval_vector(Y, p)
    return np.einsum("...a,...ia->...i", xv, yj) - np.einsum("...a,...ia->...i", yv, xj)


def _skew(comps: np.ndarray) -> np.ndarray:
    upper = np.triu(comps, k=1)  # acts on the last two axes
    return upper - np.swapaxes(upper, -1, -2)


@dataclass(frozen=True)
class Tensor12:
    """Skew-symmetric (1,2) tensor components c^i_{jk} at one or more points.

    Only the ``j < k`` part of ``comps`` is read; the rest is mirrored, so the
    stored array is exactly skew in its last two axes.  ``scale`` is the
    largest magnitude among the intermediate terms that produced it.
    """

    comps: np.ndarray
    scale: float = field(default=0.0)

    def __post_init__(self):
        c = _skew(np.asarray(self.comps, dtype=float))
        object.__setattr__(self, "comps", c)
        s = max(float(self.scale), float(np.max(np.abs(c), initial=0.0)))
        object.__setattr__(self, "scale", s)

    @property
    def dim(self) -> int:
        return self.comps.shape[-1]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.comps), initial=0.0))

    def at(self, idx) -> "Tensor12":
        return Tensor12(self.comps[idx], self.scale)

    def __add__(self, other: "Tensor12") -> "Tensor12":
        return Tensor12(self.comps + other.comps, max(self.scale, other.scale))

    def __sub__(self, other: "Tensor12") -> "Tensor12":
        return Tensor12(self.comps - other.comps, max(self.scale, other.scale))

    def __mul__(self, c) -> "Tensor12":
        c = np.asarray(c, dtype=float)
        if c.ndim:
            c = c[..., None, None, None]
        return Tensor12(c * self.comps, float(np.max(np.abs(c))) * self.scale)

    __rmul__ = __mul__

    def __neg__(self):
        return Tensor12(-self.comps, self.scale)

    def upper(self) -> dict:
        """Independent components {(i, j, k): c^i_{jk}} with j < k (0-based)."""
        n = self.dim
        return {(i, j, k): self.comps[..., i, j, k] for i in range(n) for j in range(n) for k in range(j + 1, n)}


def apply_tensor(T: Tensor12, u, v) -> np.ndarray:
    """T(u, v)^i = sum_jk T^i_{jk} u^j v^k."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != T.dim or v.shape[-1] != T.dim:
        raise ValueError("vector dimension does not match tensor dimension")
    return np.einsum("...ijk,...j,...k->...i", T.comps, u, v)


def frame(dim: int) -> list:
    """Natural frame e_1..e_n."""
    return [VectorField.basis(i, dim) for i in range(1, dim + 1)]


def to_vector_fields(columns: Iterable[Sequence], dim: int) -> list:
    return [VectorField(dim, tuple(c)) for c in columns]
