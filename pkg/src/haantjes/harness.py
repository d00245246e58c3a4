"""Random structured operator fields, the identity regression suite, and
falsification probes for the two open conjectures on binary Haantjes tensors."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import integrability as ig
from . import spectral
from . import torsion as ts
from .exprdsl import Binary, Const, Coord, Expr, Pow, Unary, evaluate, polynomial, sin, x
from .fields import OperatorField, Tensor12, VectorField, eval_operator
from .spectral import JordanChainData

KINDS = ("diagonal", "strictly_upper", "one_eigenvalue", "jordan_block",
         "commuting_nilpotent_pair", "generic")
PAIR_KINDS = ("commuting_nilpotent_pair",)
MAX_RETRIES = 20


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "generic"
    dim: int = 3
    degree: int = 2
    coeff: float = 1.0  # coefficients drawn from [-coeff, coeff]
    seed: int = 0
    box: float = 1.0  # sample box [-box, box]^n the generators are tuned for

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.degree < 0 or self.coeff <= 0:
            raise ValueError("degree must be >= 0 and coeff > 0")

    def rng(self, trial: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, trial])


# ---------------------------------------------------------------- generators


def _monomials(dim: int, degree: int):
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), d):
            powers = [0] * dim
            for k in combo:
                powers[k] += 1
            yield tuple(powers)


def _coef(rng, coeff) -> float:
    return round(float(rng.uniform(-coeff, coeff)), 3)


def random_poly(rng, dim: int, degree: int = 2, coeff: float = 1.0, density: float = 0.6) -> Expr:
    terms = [(_coef(rng, coeff), m) for m in _monomials(dim, degree) if rng.random() < density]
    terms = [(c, m) for c, m in terms if c != 0.0]
    if not terms:
        terms = [(_coef(rng, coeff) or coeff, (0,) * dim)]
    return polynomial(terms, dim)


def _abs_bound(e: Expr, box: float) -> float:
    """Bound of |p| on [-box, box]^n for a sum of monomials built by random_poly."""
    if isinstance(e, Binary) and e.op in "+-":
        return _abs_bound(e.left, box) + _abs_bound(e.right, box)
    c, deg = _mono_parts(e)
    return abs(c) * max(box, 1.0) ** deg


def _mono_parts(node) -> tuple:
    if isinstance(node, Const):
        return node.value, 0
    if isinstance(node, Coord):
        return 1.0, 1
    if isinstance(node, Pow):
        return 1.0, int(node.exponent)
    if isinstance(node, Unary) and node.op == "neg":
        c, d = _mono_parts(node.arg)
        return -c, d
    if isinstance(node, Binary) and node.op == "*":
        c1, d1 = _mono_parts(node.left)
        c2, d2 = _mono_parts(node.right)
        return c1 * c2, d1 + d2
    raise ValueError("not a monomial")


def positive_poly(rng, dim, degree, coeff, box, margin: float = 0.5) -> Expr:
    """Random polynomial shifted so that it stays >= margin on the box."""
    p = random_poly(rng, dim, degree, coeff)
    return p + round(_abs_bound(p, box) + margin, 3)


def random_scalar(rng, dim: int, degree: int = 2, coeff: float = 1.0) -> Expr:
    """Random smooth scalar: a polynomial, sometimes with a sine term."""
    p = random_poly(rng, dim, degree, coeff)
    if rng.random() < 0.3:
        k = int(rng.integers(1, dim + 1))
        p = p + _coef(rng, coeff) * sin(x(k) + _coef(rng, coeff))
    return p


def random_generic(rng, dim, degree=2, coeff=1.0) -> OperatorField:
    return OperatorField(dim, tuple(tuple(random_poly(rng, dim, degree, coeff) for _ in range(dim))
                                    for _ in range(dim)))


def random_diagonal(rng, dim, degree=2, coeff=1.0, separation: float = 0.0) -> OperatorField:
    """diag(p_1, ..., p_n); a positive separation adds i * separation to entry i."""
    return OperatorField.diagonal([random_poly(rng, dim, degree, coeff) + round(i * separation, 3)
                                   for i in range(dim)])


def random_strictly_upper(rng, dim, degree=2, coeff=1.0, box=1.0) -> OperatorField:
    """Strictly upper triangular with superdiagonal bounded away from zero on the box (nilcyclic)."""
    rows = []
    for i in range(dim):
        row = []
        for j in range(dim):
            if j <= i:
                row.append(Const(0.0))
            elif j == i + 1:
                row.append(positive_poly(rng, dim, degree, coeff, box))
            else:
                row.append(random_poly(rng, dim, degree, coeff))
        rows.append(tuple(row))
    return OperatorField(dim, tuple(rows))


def random_one_eigenvalue(rng, dim, degree=2, coeff=1.0, box=1.0) -> tuple:
    """(f, A, L = f I + A) with A nilcyclic strictly upper triangular."""
    A = random_strictly_upper(rng, dim, degree, coeff, box)
    f = random_scalar(rng, dim, degree, coeff)
    return f, A, OperatorField.scalar(f, dim) + A


def random_unipotent(rng, dim, degree=1, coeff=1.0) -> tuple:
    """(P, P^-1) with P = I + (strictly lower polynomial part); the inverse is a finite series."""
    L = OperatorField(dim, tuple(tuple(random_poly(rng, dim, degree, coeff) if j < i else Const(0.0)
                                       for j in range(dim)) for i in range(dim)))
    eye = OperatorField.identity(dim)
    P = eye + L
    Pinv = eye
    term = eye
    for _ in range(dim - 1):
        term = term @ (-L)
        Pinv = Pinv + term
    return P, Pinv


def random_partition(rng, dim: int) -> tuple:
    parts = []
    left = dim
    while left:
        k = int(rng.integers(1, left + 1))
        parts.append(k)
        left -= k
    return tuple(parts)


@dataclass(frozen=True)
class JordanConstruction:
    """A = P (Lambda + N) P^-1 with explicit Jordan chains X_a = P e_a."""

    operator: OperatorField
    blocks: tuple
    eigenvalues: tuple  # one Expr per block
    chains: tuple  # JordanChainData per block
    transform: OperatorField


def random_jordan(rng, dim, degree=1, coeff=1.0, blocks: tuple | None = None,
                  nilpotent: bool = False, constant_eigenvalues: bool = False,
                  separation: float = 3.0) -> JordanConstruction:
    blocks = random_partition(rng, dim) if blocks is None else tuple(blocks)
    if sum(blocks) != dim:
        raise ValueError("block sizes must sum to dim")
    P, Pinv = random_unipotent(rng, dim, degree, coeff)
    mus = []
    for b in range(len(blocks)):
        if nilpotent:
            mus.append(Const(0.0))
        elif constant_eigenvalues:
            mus.append(Const(round(b * separation + _coef(rng, coeff), 3)))
        else:
            mus.append(random_poly(rng, dim, degree, coeff) + round(b * separation, 3))
    J = [[Const(0.0)] * dim for _ in range(dim)]
    start = 0
    owners = []
    for b, size in enumerate(blocks):
        for a in range(size):
            J[start + a][start + a] = mus[b]
            if a:
                J[start + a - 1][start + a] = Const(1.0)
        owners.append(range(start, start + size))
        start += size
    Jf = OperatorField(dim, tuple(tuple(r) for r in J))
    A = P @ Jf @ Pinv
    chains = tuple(JordanChainData(mus[b], tuple(P.column(c) for c in cols)) for b, cols in enumerate(owners))
    return JordanConstruction(A, blocks, tuple(mus), chains, P)


def rank_one_construction(rng, dim, degree=1, coeff=1.0) -> tuple:
    """A = u (x) w with w_1 = 1; returns (A, kernel frame e_j - w_j e_1, j >= 2)."""
    w = [Const(1.0)] + [random_poly(rng, dim, degree, coeff) for _ in range(dim - 1)]
    u = [random_poly(rng, dim, degree, coeff) for _ in range(dim)]
    A = OperatorField(dim, tuple(tuple(u[i] * w[j] for j in range(dim)) for i in range(dim)))
    frame = []
    for j in range(1, dim):
        comps = [Const(0.0)] * dim
        comps[0] = -w[j]
        comps[j] = Const(1.0)
        frame.append(VectorField(dim, tuple(comps)))
    return A, frame


def kernel_construction(rng, dim, degree=1, coeff=1.0) -> tuple:
    """(A, frame of ker A) for a nilpotent Jordan construction with at least two blocks."""
    if dim < 2:
        raise ValueError("need dim >= 2")
    blocks = (dim - 1, 1) if dim >= 3 else (1, 1)
    jc = random_jordan(rng, dim, degree, coeff, blocks=blocks, nilpotent=True)
    return jc.operator, [c.fields[0] for c in jc.chains]


def random_commuting_nilpotent_pair(rng, dim, degree=2, coeff=1.0, box=1.0, family: str | None = None) -> tuple:
    """Two commuting strictly upper triangular fields.

    family "powers": A nilcyclic, B = c1 A + c2 A^2 (constants).
    family "constant": B a constant nilcyclic matrix, A = sum_k f_k(x) B^k.
    """
    family = family or ("powers" if rng.random() < 0.5 else "constant")
    if family == "powers":
        A = random_strictly_upper(rng, dim, degree, coeff, box)
        c1 = _coef(rng, coeff) or coeff
        c2 = _coef(rng, coeff)
        return A, c1 * A + c2 * A.power(2)
    if family == "constant":
        M = np.triu(np.round(rng.uniform(-coeff, coeff, (dim, dim)), 3), 1)
        idx = np.arange(dim - 1)
        M[idx, idx + 1] = np.round(np.abs(M[idx, idx + 1]) + 0.5, 3)
        B = OperatorField.constant(M)
        A = OperatorField.zeros(dim)
        Bk = B
        for _ in range(dim - 1):
            A = A + random_poly(rng, dim, degree, coeff) * Bk
            Bk = Bk @ B
        return A, B
    raise ValueError(f"unknown family {family!r}")


def random_commuting_pair(rng, dim, degree=1, coeff=1.0) -> tuple:
    """Generic A and B = c0 I + c1 A + c2 A^2 with scalar-field coefficients: [A, B] = 0 pointwise."""
    A = random_generic(rng, dim, degree, coeff)
    c0, c1, c2 = (random_poly(rng, dim, degree, coeff) for _ in range(3))
    return A, OperatorField.scalar(c0, dim) + c1 * A + c2 * A.power(2)


def random_operator(spec: GeneratorSpec, trial: int = 0):
    """Operator (or pair, for pair kinds) of the requested structural kind."""
    rng = spec.rng(trial)
    n, d, c, box = spec.dim, spec.degree, spec.coeff, spec.box
    for _ in range(MAX_RETRIES):
        if spec.kind == "diagonal":
            return random_diagonal(rng, n, d, c)
        if spec.kind == "strictly_upper":
            return random_strictly_upper(rng, n, d, c, box)
        if spec.kind == "one_eigenvalue":
            return random_one_eigenvalue(rng, n, d, c, box)[2]
        if spec.kind == "jordan_block":
            return random_jordan(rng, n, min(d, 1), c).operator
        if spec.kind == "generic":
            return random_generic(rng, n, d, c)
        A, B = random_commuting_nilpotent_pair(rng, n, d, c, box)
        pts = rng.uniform(-box, box, (8, n))
        if np.abs(eval_operator(B, pts).value).max() > 0:
            return A, B
    raise RuntimeError(f"could not generate a non-degenerate {spec.kind} instance")


# ---------------------------------------------------------------- identity suite


def _rel(lhs: Tensor12 | np.ndarray, rhs: Tensor12 | np.ndarray | float = 0.0) -> tuple:
    """(max |lhs - rhs|, scale) for tensors or raw component arrays."""
    lc = lhs.comps if isinstance(lhs, Tensor12) else np.asarray(lhs)
    rc = rhs.comps if isinstance(rhs, Tensor12) else np.asarray(rhs)
    scale = max(getattr(lhs, "scale", 0.0), getattr(rhs, "scale", 0.0),
                float(np.max(np.abs(lc), initial=0.0)), float(np.max(np.abs(rc), initial=0.0)))
    return float(np.max(np.abs(lc - rc), initial=0.0)), scale


def _field_values(f: Expr, pts) -> np.ndarray:
    return np.asarray(evaluate(f, pts), dtype=float)[..., None, None, None]


def _scalars(rng, n, k):
    return [random_scalar(rng, n, 1, 1.0) for _ in range(k)]


def _id_haantjes_affine_scaling(rng, n, pts):
    A = random_generic(rng, n)
    f, g = _scalars(rng, n, 2)
    lhs = ts.haantjes(OperatorField.scalar(f, n) + g * A, pts)
    return _rel(lhs, _field_values(g, pts) ** 4 * ts.haantjes(A, pts).comps)


def _id_fn_with_identity_vanishes(rng, n, pts):
    B = random_generic(rng, n)
    return _rel(ts.fn_bracket(OperatorField.identity(n), B, pts))


def _id_fn_scalar_multiple(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    return ts.fn_scaling_residual(A, B, random_scalar(rng, n), pts, with_scale=True)


def _id_nijenhuis_of_linear_combination(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    a, b = rng.uniform(-2, 2, 2)
    lhs = ts.nijenhuis(a * A + b * B, pts)
    rhs = a * a * ts.nijenhuis(A, pts) + b * b * ts.nijenhuis(B, pts) + a * b * ts.fn_bracket(A, B, pts)
    return _rel(lhs, rhs)


def _id_fn_diagonal_twice_nijenhuis(rng, n, pts):
    A = random_generic(rng, n)
    return _rel(ts.fn_bracket(A, A, pts), 2 * ts.nijenhuis(A, pts))


def _id_binary_diagonal_four_haantjes(rng, n, pts):
    A = random_generic(rng, n)
    return _rel(ts.binary_haantjes(A, A, pts), 4 * ts.haantjes(A, pts))


def _id_binary_symmetry(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    return _rel(ts.binary_haantjes(A, B, pts), ts.binary_haantjes(B, A, pts))


def _id_binary_identity_vanishes(rng, n, pts):
    return _rel(ts.binary_haantjes(OperatorField.identity(n), random_generic(rng, n), pts))


def _id_binary_scalar_multiple(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    return ts.fab_identity_residual(A, B, random_scalar(rng, n), pts, with_scale=True)


def _id_binary_commuting_scaling(rng, n, pts):
    A, B = random_commuting_pair(rng, n)
    f, g = _scalars(rng, n, 2)
    lhs = ts.binary_haantjes(f * A, g * B, pts)
    return _rel(lhs, (_field_values(f, pts) * _field_values(g, pts)) ** 2 * ts.binary_haantjes(A, B, pts).comps)


def _id_binary_scalar_operator_vanishes(rng, n, pts):
    f, g = _scalars(rng, n, 2)
    return _rel(ts.binary_haantjes(OperatorField.scalar(f, n), g * random_generic(rng, n), pts))


def _id_binary_scalar_shift_expansion(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    return ts.shift_identity_residual(A, B, random_scalar(rng, n), pts, with_scale=True)


def _id_binary_commuting_affine(rng, n, pts):
    A, B = random_commuting_pair(rng, n)
    f, g, h, k = _scalars(rng, n, 4)
    lhs = ts.binary_haantjes(OperatorField.scalar(f, n) + g * A, OperatorField.scalar(h, n) + k * B, pts)
    w = (_field_values(g, pts) * _field_values(k, pts)) ** 2
    return _rel(lhs, w * ts.binary_haantjes(A, B, pts).comps)


def _id_delta_scalar_vanishes(rng, n, pts):
    f = random_scalar(rng, n)
    return _rel(ts.delta_tensor(OperatorField.scalar(f, n), random_generic(rng, n), pts))


def _id_haantjes_sum_decomposition(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    lhs = ts.haantjes(A + B, pts)
    rhs = ts.haantjes(A, pts) + ts.haantjes(B, pts) + ts.binary_haantjes(A, B, pts) + ts.delta_tensor(A, B, pts)
    return _rel(lhs, rhs)


def _id_diagonal_pair_binary_vanishes(rng, n, pts):
    return _rel(ts.binary_haantjes(random_diagonal(rng, n), random_diagonal(rng, n), pts))


def _id_diagonal_pair_delta_vanishes(rng, n, pts):
    return _rel(ts.delta_tensor(random_diagonal(rng, n), random_diagonal(rng, n), pts))


LEVELS = (1, 2, 3, 4)


def _worst(pairs):
    r = max(p[0] / (1 + p[1]) for p in pairs)
    return next((res, s) for res, s in pairs if res / (1 + s) == r)


def _id_level_identity_vanishes(rng, n, pts):
    B = random_generic(rng, n)
    eye = OperatorField.identity(n)
    return _worst([_rel(ts.binary_level(eye, B, m, pts)) for m in LEVELS])


def _id_level_commuting_scaling(rng, n, pts):
    A, B = random_commuting_pair(rng, n)
    f = random_scalar(rng, n)
    fv = _field_values(f, pts)
    return _worst([_rel(ts.binary_level(f * A, B, m, pts), fv ** m * ts.binary_level(A, B, m, pts).comps)
                   for m in LEVELS[1:]])


def _id_level_scalar_operator_vanishes(rng, n, pts):
    fI = OperatorField.scalar(random_scalar(rng, n), n)
    B = random_generic(rng, n)
    # level 1 is excluded: [[fI, B]] = (BX)(f) Y - X(f) BY - (BY)(f) X + Y(f) BX
    return _worst([_rel(ts.binary_level(fI, B, m, pts)) for m in LEVELS[1:]])


def _id_level_commuting_affine(rng, n, pts):
    A, B = random_commuting_pair(rng, n)
    f, g, h, k = _scalars(rng, n, 4)
    P = OperatorField.scalar(f, n) + g * A
    Q = OperatorField.scalar(h, n) + k * B
    w = _field_values(g, pts) * _field_values(k, pts)
    return _worst([_rel(ts.binary_level(P, Q, m, pts), w ** m * ts.binary_level(A, B, m, pts).comps)
                   for m in LEVELS[1:]])


def _id_tau_identity_vanishes(rng, n, pts):
    eye = OperatorField.identity(n)
    return _worst([_rel(ts.tau_level(eye, m, pts)) for m in LEVELS])


def _id_tau_affine_scaling(rng, n, pts):
    A = random_generic(rng, n)
    f, g = _scalars(rng, n, 2)
    L = OperatorField.scalar(f, n) + g * A
    gv = _field_values(g, pts)
    return _worst([_rel(ts.tau_level(L, m, pts), gv ** (2 * m) * ts.tau_level(A, m, pts).comps)
                   for m in LEVELS[1:]])


def _id_nijenhuis_scalar_multiple(rng, n, pts):
    return ts.nijenhuis_scaling_residual(random_generic(rng, n), random_scalar(rng, n), pts, with_scale=True)


def _id_level_symmetry(rng, n, pts):
    A, B = random_generic(rng, n), random_generic(rng, n)
    return _worst([_rel(ts.binary_level(A, B, m, pts), ts.binary_level(B, A, m, pts)) for m in LEVELS])


IDENTITIES: dict[str, Callable] = {
    "haantjes_affine_scaling": _id_haantjes_affine_scaling,
    "fn_with_identity_vanishes": _id_fn_with_identity_vanishes,
    "fn_scalar_multiple": _id_fn_scalar_multiple,
    "nijenhuis_of_linear_combination": _id_nijenhuis_of_linear_combination,
    "fn_diagonal_twice_nijenhuis": _id_fn_diagonal_twice_nijenhuis,
    "binary_diagonal_four_haantjes": _id_binary_diagonal_four_haantjes,
    "binary_symmetry": _id_binary_symmetry,
    "binary_identity_vanishes": _id_binary_identity_vanishes,
    "binary_scalar_multiple": _id_binary_scalar_multiple,
    "binary_commuting_scaling": _id_binary_commuting_scaling,
    "binary_scalar_operator_vanishes": _id_binary_scalar_operator_vanishes,
    "binary_scalar_shift_expansion": _id_binary_scalar_shift_expansion,
    "binary_commuting_affine": _id_binary_commuting_affine,
    "delta_scalar_vanishes": _id_delta_scalar_vanishes,
    "haantjes_sum_decomposition": _id_haantjes_sum_decomposition,
    "diagonal_pair_binary_vanishes": _id_diagonal_pair_binary_vanishes,
    "diagonal_pair_delta_vanishes": _id_diagonal_pair_delta_vanishes,
    "level_identity_vanishes": _id_level_identity_vanishes,
    "level_commuting_scaling": _id_level_commuting_scaling,
    "level_scalar_operator_vanishes": _id_level_scalar_operator_vanishes,
    "level_commuting_affine": _id_level_commuting_affine,
    "tau_identity_vanishes": _id_tau_identity_vanishes,
    "tau_affine_scaling": _id_tau_affine_scaling,
    "nijenhuis_scalar_multiple": _id_nijenhuis_scalar_multiple,
    "level_symmetry": _id_level_symmetry,
}


@dataclass
class IdentityRecord:
    name: str
    dim: int
    trials: int
    passed: bool
    max_relative: float
    max_residual: float
    max_scale: float
    worst_trial: int
    worst_point: list

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SuiteReport:
    records: list
    tol: float
    seed: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def failures(self) -> list:
        return [r for r in self.records if not r.passed]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "seed": self.seed,
                "records": [r.as_dict() for r in self.records]}


def _pointwise_worst(fn, rng_state, n, pts):
    """Re-run one instance point by point to locate the worst sample point."""
    worst, where = -1.0, 0
    for i, p in enumerate(pts):
        r, s = fn(np.random.default_rng(rng_state), n, p)
        if r / (1 + s) > worst:
            worst, where = r / (1 + s), i
    return where


def identity_suite(points=None, trials: int = 20, seed: int = 0, dims=(2, 3, 4), n_points: int = 20,
                   tol: float = 1e-8, names=None, box: float = 1.0) -> SuiteReport:
    """Every identity on `trials` random instances x `n_points` random points per dimension."""
    names = list(IDENTITIES) if names is None else list(names)
    records = []
    for name in names:
        fn = IDENTITIES[name]
        for n in dims:
            worst_rel, worst = -1.0, (0.0, 0.0, 0, None)
            for t in range(trials):
                state = [seed, n, t, list(IDENTITIES).index(name)]
                pts_rng = np.random.default_rng(state + [1])
                if points is not None and np.shape(points)[-1] == n:
                    pts = np.asarray(points, dtype=float).reshape(-1, n)
                else:
                    pts = pts_rng.uniform(-box, box, (n_points, n))
                r, s = fn(np.random.default_rng(state), n, pts)
                if r / (1 + s) > worst_rel:
                    worst_rel, worst = r / (1 + s), (r, s, t, (state, pts))
            r, s, t, (state, pts) = worst
            where = _pointwise_worst(fn, state, n, pts) if worst_rel >= tol else 0
            records.append(IdentityRecord(name, n, trials, worst_rel < tol, worst_rel, r, s, t,
                                          pts[where].tolist()))
    return SuiteReport(records, tol, seed)


# ---------------------------------------------------------------- conjecture probes


@dataclass
class ProbeReport:
    conjecture: int
    spec: dict
    trials: int
    qualifying: int
    discarded: int
    band: tuple
    records: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "conjecture": self.conjecture,
            "spec": self.spec,
            "trials": self.trials,
            "qualifying": self.qualifying,
            "discarded": self.discarded,
            "band": list(self.band),
            "candidates": self.candidates,
            "records": self.records,
            "notes": self.notes,
            "histogram": _histogram([r.get("residual", r.get("h_ab")) for r in self.records]),
        }


def _histogram(values) -> dict:
    vals = [v for v in values if v is not None]
    edges = [0.0] + [10.0 ** k for k in range(-16, 3, 2)] + [float("inf")]
    counts = [0] * (len(edges) - 1)
    for v in vals:
        for i in range(len(counts)):
            if edges[i] <= v < edges[i + 1]:
                counts[i] += 1
                break
    labels = [f"[{edges[i]:.0e},{edges[i + 1]:.0e})" for i in range(len(counts))]
    return dict(zip(labels, counts))


def _relmax(T: Tensor12) -> float:
    return T.max_abs() / (1.0 + T.scale)


def _conj1_pair(rng, kind, n, spec):
    if kind == "diagonal":
        return random_diagonal(rng, n, spec.degree, spec.coeff), random_diagonal(rng, n, spec.degree, spec.coeff)
    if kind == "identical":
        A = random_strictly_upper(rng, n, spec.degree, spec.coeff, spec.box)
        return A, A
    return random_commuting_nilpotent_pair(rng, n, spec.degree, spec.coeff, spec.box)


def conjecture1_probe(spec: GeneratorSpec | None = None, trials: int = 50, points: int = 20,
                      tol: float = 1e-8, band: float = 100.0, kind: str | None = None) -> ProbeReport:
    """H_A = H_B = 0 and [A, B] = 0:  does H_{A,B} = 0 agree with H_{A+B} = 0?

    The pair kind defaults to the spec kind ("diagonal" or a commuting nilpotent
    pair); "identical" (A = B) is also accepted.
    """
    spec = spec or GeneratorSpec("commuting_nilpotent_pair", 3)
    kind = kind or spec.kind
    n = spec.dim
    rep = ProbeReport(1, {**asdict(spec), "pair_kind": kind}, trials, 0, 0, (tol, band * tol))
    for t in range(trials):
        rng = spec.rng(t)
        A, B = _conj1_pair(rng, kind, n, spec)
        pts = rng.uniform(-spec.box, spec.box, (points, n))
        HA, HB = ts.haantjes(A, pts), ts.haantjes(B, pts)
        Av, Bv = eval_operator(A, pts).value, eval_operator(B, pts).value
        comm = float(np.abs(Av @ Bv - Bv @ Av).max()) / (1 + float(np.abs(Av).max() * np.abs(Bv).max()))
        if _relmax(HA) >= tol or _relmax(HB) >= tol or comm >= tol:
            rep.discarded += 1
            continue
        rep.qualifying += 1
        h_ab = _relmax(ts.binary_haantjes(A, B, pts))
        h_sum = _relmax(ts.haantjes(A + B, pts))
        rec = {"trial": t, "seed": [spec.seed, t], "h_ab": h_ab, "h_sum": h_sum,
               "fn": _relmax(ts.fn_bracket(A, B, pts))}
        rep.records.append(rec)
        if (h_ab < tol and h_sum > band * tol) or (h_sum < tol and h_ab > band * tol):
            worst = int(np.argmax(np.abs(ts.binary_haantjes(A, B, pts).comps - ts.haantjes(A + B, pts).comps)
                                  .reshape(points, -1).max(axis=1)))
            rep.candidates.append({**rec, "point": pts[worst].tolist(),
                                   "A": A.to_strings(), "B": B.to_strings()})
    return rep


def conjecture2_probe(spec: GeneratorSpec | None = None, trials: int = 50, points: int = 20,
                      tol: float = 1e-8, band: float = 100.0) -> ProbeReport:
    """Commuting nilpotent pairs, both strictly upper in the natural flag: does H^(n-1)_{A,B} vanish?"""
    spec = spec or GeneratorSpec("commuting_nilpotent_pair", 3)
    n = spec.dim
    rep = ProbeReport(2, asdict(spec), trials, 0, 0, (tol, band * tol))
    rep.notes.append("pairs are generated strictly upper triangular in the same natural flag")
    if n == 2:
        rep.notes.append("n = 2: level n-1 = 1 is the Froelicher-Nijenhuis bracket itself")
    for t in range(trials):
        rng = spec.rng(t)
        A, B = random_commuting_nilpotent_pair(rng, n, spec.degree, spec.coeff, spec.box)
        pts = rng.uniform(-spec.box, spec.box, (points, n))
        if not (A.is_strictly_upper and B.is_strictly_upper):
            rep.discarded += 1
            continue
        rep.qualifying += 1
        H = ts.binary_level(A, B, max(n - 1, 1), pts)
        r = _relmax(H)
        rec = {"trial": t, "seed": [spec.seed, t], "level": max(n - 1, 1), "residual": r,
               "nilcyclic_A": spectral.is_nilcyclic(A, pts)}
        if n > 2:
            # the level below is not predicted to vanish; recording it shows the probe is not vacuous
            rec["lower_level_residual"] = _relmax(ts.binary_level(A, B, n - 2, pts))
        rep.records.append(rec)
        if r > band * tol:
            worst = int(np.argmax(np.abs(H.comps).reshape(points, -1).max(axis=1)))
            rep.candidates.append({**rec, "point": pts[worst].tolist(),
                                   "A": A.to_strings(), "B": B.to_strings()})
    return rep


# ---------------------------------------------------------------- soundness sweep

SWEEP_KINDS = ("diagonal", "constant_conjugate", "tilted_diagonal", "strictly_upper",
               "one_eigenvalue", "jordan_constant", "jordan_variable")


def _constant_conjugate(rng, n, degree, coeff):
    """C diag(p_i) C^-1 with a constant well-conditioned C (a linear change of chart)."""
    while True:
        C = np.round(rng.uniform(-1, 1, (n, n)) + 2 * np.eye(n), 3)
        if np.linalg.cond(C) < 50:
            break
    D = random_diagonal(rng, n, degree, coeff, separation=3.0)
    return OperatorField.constant(C) @ D @ OperatorField.constant(np.linalg.inv(C))


def sweep_operator(rng, kind: str, n: int, degree: int = 1, coeff: float = 1.0) -> OperatorField:
    if kind == "diagonal":
        return random_diagonal(rng, n, degree, coeff, separation=3.0)
    if kind == "constant_conjugate":
        return _constant_conjugate(rng, n, degree, coeff)
    if kind == "tilted_diagonal":
        P, Pinv = random_unipotent(rng, n, 1, coeff)
        return P @ random_diagonal(rng, n, 0, coeff, separation=3.0) @ Pinv
    if kind == "strictly_upper":
        return random_strictly_upper(rng, n, degree, coeff)
    if kind == "one_eigenvalue":
        return random_one_eigenvalue(rng, n, degree, coeff)[2]
    if kind == "jordan_constant":
        return random_jordan(rng, n, 1, coeff, constant_eigenvalues=True).operator
    if kind == "jordan_variable":
        return random_jordan(rng, n, 1, coeff).operator
    raise ValueError(f"unknown sweep kind {kind!r}")


def soundness_sweep(trials: int = 100, seed: int = 0, dims=(2, 3), points: int = 8,
                    tol: float = 1e-8) -> dict:
    """Whenever the level scan finds a vanishing torsion, every eigen-distribution
    and pairwise direct sum must pass its involutivity check."""
    rows = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        kind = SWEEP_KINDS[t % len(SWEEP_KINDS)]
        n = dims[(t // len(SWEEP_KINDS)) % len(dims)]
        A = sweep_operator(rng, kind, n)
        pts = rng.uniform(-1, 1, (points, n))
        v = ig.integrability_report(A, pts, 2 * n, tol)
        checks = v.distributions + v.semidirect_sums
        rows.append({
            "trial": t, "kind": kind, "dim": n, "smallest_m": v.scan.smallest_m,
            "usable_points": len(v.usable_points), "checks": len(checks),
            "all_involutive": all(c["involutive"] for c in checks),
            "contradiction": v.contradiction,
        })
    found = [r for r in rows if r["smallest_m"] is not None]
    return {
        "trials": trials,
        "scan_found": len(found),
        "contradictions": sum(r["contradiction"] for r in rows),
        "withheld": sum(r["usable_points"] == 0 for r in found),
        "rows": rows,
    }


# ---------------------------------------------------------------- golden example


def golden_example() -> OperatorField:
    """3x3 operator with eigenvalues l1 (double, one Jordan block) and l2.

    L = [[l1, f, 0], [0, l1, g], [0, 0, l2]], l1 = e^s - 1, l2 = e^(s^2),
    f = sin s, g = cos s, s = x1 + x2 + x3.
    """
    s = "(x1 + x2 + x3)"
    return OperatorField.from_rows([
        [f"exp{s} - 1", f"sin{s}", "0"],
        ["0", f"exp{s} - 1", f"cos{s}"],
        ["0", "0", f"exp({s}^2)"],
    ])


def golden_example_check(points=None, count: int = 10, seed: int = 0, tol: float = 1e-8,
                         operator: OperatorField | None = None) -> dict:
    """Level hierarchy, Riesz indices and the double eigen-distribution of the example."""
    L = operator or golden_example()
    rng = np.random.default_rng(seed)
    if points is None:
        chosen, resampled = [], 0
        while len(chosen) < count:
            p = rng.uniform(-1, 1, 3)
            rep = spectral.spectrum(L, p)
            if rep.near_degenerate or rep.warnings:
                resampled += 1
                continue
            chosen.append(p)
        pts = np.array(chosen)
    else:
        pts, resampled = np.asarray(points, dtype=float).reshape(-1, 3), 0
    t1, t2, t3 = ts.tau_tower(L, 3, pts)
    reports = [spectral.spectrum(L, p) for p in pts]
    riesz = []
    span_res = 0.0
    samples = []
    e12 = np.eye(3)[:, :2]
    for p, r in zip(pts, reports):
        by_mult = sorted(r.clusters, key=lambda c: -c.multiplicity)
        riesz.append([c.riesz_index for c in by_mult])
        D1 = by_mult[0].basis
        span_res = max(span_res, max(ig.span_residual(D1, e12[:, k]) for k in range(2)),
                       0.0 if D1.shape[1] == 2 else 1.0)
        samples.append(ig.DistributionSample(p, D1, "D1"))
    inv = ig.involutive_check([VectorField.basis(1, 3), VectorField.basis(2, 3)], pts, tol, samples=samples)
    v3 = ig.tensor_vanishes(t3, tol)
    checks = {
        "tau1_nonzero": t1.max_abs() > 1e-3,
        "tau2_nonzero": t2.max_abs() > 1e-3,
        "tau3_vanishes": v3.vanishes,
        "riesz_2_1": all(r == [2, 1] for r in riesz),
        "D1_is_e1_e2": span_res < 1e-8,
        "D1_involutive": inv.involutive,
    }
    return {
        "passed": all(checks.values()),
        "checks": checks,
        "points": pts.tolist(),
        "resampled": resampled,
        "tau1_max": t1.max_abs(),
        "tau2_max": t2.max_abs(),
        "tau3": v3.as_dict(),
        "riesz_indices": riesz,
        "D1_span_residual": span_res,
        "D1_involutivity": inv.as_dict(),
    }


__all__ = [
    "KINDS", "GeneratorSpec", "random_poly", "positive_poly", "random_scalar", "random_generic",
    "random_diagonal", "random_strictly_upper", "random_one_eigenvalue", "random_unipotent",
    "random_partition", "JordanConstruction", "random_jordan", "rank_one_construction",
    "kernel_construction", "random_commuting_nilpotent_pair", "random_commuting_pair",
    "random_operator", "IDENTITIES", "IdentityRecord", "SuiteReport", "identity_suite",
    "ProbeReport", "conjecture1_probe", "conjecture2_probe", "SWEEP_KINDS", "sweep_operator",
    "soundness_sweep", "golden_example", "golden_example_check",
]
