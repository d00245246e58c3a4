"""Involutivity and integrability criteria built on the generalized torsions.

A tensor field is declared to vanish when its largest component is below
``tol * (1 + scale)`` at every sample point, ``scale`` being the largest
intermediate magnitude seen while computing it.  Every verdict records the
tolerance and the points used.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

from . import spectral
from .exprdsl import Expr, as_expr, as_points, evaluate
from .fields import OperatorField, Tensor12, VectorField, eval_operator, eval_vector, lie_bracket
from .torsion import tau_level, tau_tower

FD_STEP = 1e-5
FD_TOL = 1e-6


def default_points(dim: int, count: int = 20, seed: int = 0, box: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-box, box, size=(count, dim))


def _pts(points, dim) -> np.ndarray:
    return as_points(points, dim).reshape(-1, dim)


def _orth(basis: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    u, s, _ = np.linalg.svd(np.asarray(basis, dtype=float), full_matrices=False)
    if not s.size:
        return u
    return u[:, s > tol * max(s[0], 1e-300)]


def span_residual(basis: np.ndarray, v: np.ndarray) -> float:
    """Norm of the component of v orthogonal to the column span of basis."""
    q = _orth(basis)
    return float(np.linalg.norm(v - q @ (q.T @ v)))


# ------------------------------------------------------------------ involutivity


@dataclass(frozen=True)
class DistributionSample:
    point: np.ndarray
    basis: np.ndarray
    tag: str = "user"

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class InvolutivityResult:
    involutive: bool
    max_residual: float
    threshold: float
    method: str  # "frame" (exact brackets) or "projector-fd" (derivative-approximate)
    residuals: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "involutive": self.involutive,
            "max_residual": self.max_residual,
            "threshold": self.threshold,
            "method": self.method,
            "pair_residuals": {f"{i},{j}": r for (i, j), r in sorted(self.residuals.items())},
        }


def involutive_check(frame: Sequence[VectorField], points, tol: float = 1e-8,
                     samples: Sequence[DistributionSample] | None = None) -> InvolutivityResult:
    """[frame_i, frame_j] lies in the span of the frame (or the given samples) at every point."""
    frame = list(frame)
    if not frame:
        raise ValueError("empty frame")
    n = frame[0].dim
    pts = _pts(points, n)
    vals = np.stack([eval_vector(X, pts)[0] for X in frame], axis=-1)  # (P, n, r)
    if samples is not None:
        if len(samples) != len(pts):
            raise ValueError("one distribution sample per point is required")
        for s, v in zip(samples, vals):
            if max(span_residual(s.basis, v[:, c]) for c in range(v.shape[1])) > 1e-6 * (1 + np.abs(v).max()):
                raise ValueError(f"frame does not lie in the sampled distribution at {s.point.tolist()}")
        bases = [s.basis for s in samples]
    else:
        bases = list(vals)
    worst = 0.0
    residuals = {}
    for i in range(len(frame)):
        for j in range(i + 1, len(frame)):
            br = lie_bracket(frame[i], frame[j], pts)
            r = max(span_residual(b, v) / (1.0 + np.linalg.norm(v)) for b, v in zip(bases, br))
            residuals[(i, j)] = r
            worst = max(worst, r)
    return InvolutivityResult(worst < tol, worst, tol, "frame", residuals)


def projector_involutive_check(basis_at: Callable[[np.ndarray], np.ndarray], points,
                               dim: int, h: float = FD_STEP, tol: float = FD_TOL) -> InvolutivityResult:
    """Involutivity of a distribution known only pointwise.

    Each basis vector u at p is extended to the local field x -> Pi(x) u, with
    Pi the orthogonal projector onto the distribution; the brackets of these
    extensions need dPi, taken by central differences with step h.  This is a
    derivative-approximate check and is labelled as such.
    """
    worst = 0.0
    residuals = {}

    def proj(x):
        q = _orth(basis_at(x))
        return q @ q.T

    for p in _pts(points, dim):
        q = _orth(basis_at(p))
        r = q.shape[1]
        dP = [(proj(p + h * q[:, a]) - proj(p - h * q[:, a])) / (2 * h) for a in range(r)]
        for a in range(r):
            for b in range(a + 1, r):
                # [U, V] = DV.U - DU.V with U = Pi u, V = Pi v
                br = dP[a] @ q[:, b] - dP[b] @ q[:, a]
                res = float(np.linalg.norm(br - q @ (q.T @ br)))
                residuals[(a, b)] = max(residuals.get((a, b), 0.0), res)
                worst = max(worst, res)
    return InvolutivityResult(worst < tol, worst, tol, "projector-fd", residuals)


# ------------------------------------------------------------------ tensor vanishing


@dataclass(frozen=True)
class VanishingResult:
    vanishes: bool
    max_residual: float
    scale: float
    tol: float

    @property
    def threshold(self) -> float:
        return self.tol * (1.0 + self.scale)

    def as_dict(self) -> dict:
        return {"vanishes": self.vanishes, "max_residual": self.max_residual,
                "scale": self.scale, "tol": self.tol}


def tensor_vanishes(T: Tensor12, tol: float = 1e-8) -> VanishingResult:
    r = T.max_abs()
    return VanishingResult(r < tol * (1.0 + T.scale), r, T.scale, tol)


def _pair_residual(T: Tensor12, U: np.ndarray, V: np.ndarray) -> float:
    """max |T(u, v)| over columns u of U, v of V; U, V shaped (P, n, r)."""
    out = np.einsum("pijk,pja,pkb->piab", T.comps, U, V)
    return float(np.max(np.abs(out), initial=0.0))


def vanishing_on_args(producer: Callable[[int, np.ndarray], Tensor12], m: int, U, V, points,
                      tol: float = 1e-8) -> VanishingResult:
    """Does T = producer(m, points) vanish on all pairs of columns of U and V?

    U and V are per-point bases shaped (P, n, r) (or a single (n, r) basis used
    at every point).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, np.shape(U)[-2])
    T = producer(m, pts)
    U = np.broadcast_to(np.asarray(U, dtype=float), (len(pts),) + np.shape(U)[-2:])
    V = np.broadcast_to(np.asarray(V, dtype=float), (len(pts),) + np.shape(V)[-2:])
    r = _pair_residual(T, U, V)
    return VanishingResult(r < tol * (1.0 + T.scale), r, T.scale, tol)


# ------------------------------------------------------------------ level scan and distribution checks


@dataclass(frozen=True)
class ScanResult:
    smallest_m: int | None
    levels: tuple  # VanishingResult per m = 1..m_max
    m_max: int
    tol: float

    @property
    def verdict(self) -> str:
        return "integrable" if self.smallest_m is not None else "inconclusive"

    def as_dict(self) -> dict:
        return {
            "smallest_m": self.smallest_m,
            "verdict": self.verdict,
            "m_max": self.m_max,
            "tol": self.tol,
            "levels": [dict(m=i + 1, **v.as_dict()) for i, v in enumerate(self.levels)],
        }


def main_theorem_scan(A: OperatorField, points=None, m_max: int | None = None,
                      tol: float = 1e-8) -> ScanResult:
    """First m in 1..m_max whose generalized torsion vanishes on the whole sample."""
    m_max = 2 * A.dim if m_max is None else m_max
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    pts = default_points(A.dim) if points is None else _pts(points, A.dim)
    levels = tuple(tensor_vanishes(T, tol) for T in tau_tower(A, m_max, pts))
    smallest = next((i + 1 for i, v in enumerate(levels) if v.vanishes), None)
    return ScanResult(smallest, levels, m_max, tol)


def _cluster_basis(A: OperatorField, idx, tol_rank: float):
    """x -> basis of the direct sum of the indexed eigen-distributions at x."""

    def basis_at(x):
        rep = spectral.spectrum(A, x, tol_rank=tol_rank)
        return np.column_stack([rep.clusters[i].basis for i in idx])

    return basis_at


@dataclass
class IntegrabilityVerdict:
    scan: ScanResult
    points: np.ndarray
    usable_points: np.ndarray
    signature: tuple | None
    distributions: list = field(default_factory=list)
    semidirect_sums: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def contradiction(self) -> bool:
        """The scan found some m, yet a distribution or sum failed its involutivity check."""
        if self.scan.smallest_m is None:
            return False
        checks = self.distributions + self.semidirect_sums
        return any(not c["involutive"] for c in checks if c.get("involutive") is not None)

    def as_dict(self) -> dict:
        return {
            "scan": self.scan.as_dict(),
            "verdict": self.scan.verdict,
            "points": self.points.tolist(),
            "usable_points": len(self.usable_points),
            "signature": [list(s) for s in self.signature] if self.signature else None,
            "distributions": self.distributions,
            "semidirect_sums": self.semidirect_sums,
            "contradiction": self.contradiction,
            "warnings": self.warnings,
        }


def integrability_report(A: OperatorField, points=None, m_max: int | None = None, tol: float = 1e-8,
                         tol_rank: float = 1e-8, frames: dict | None = None) -> IntegrabilityVerdict:
    """Level scan plus direct involutivity checks of every eigen-distribution
    and every pairwise direct sum.

    ``frames`` optionally maps a cluster index to DSL vector fields spanning that
    eigen-distribution; those clusters get the exact bracket check, the others
    the projector finite-difference check.
    """
    n = A.dim
    pts = default_points(n) if points is None else _pts(points, n)
    scan = main_theorem_scan(A, pts, m_max, tol)
    verdict = IntegrabilityVerdict(scan, pts, pts[:0], None)
    usable = []
    sig = None
    for p in pts:
        try:
            rep = spectral.spectrum(A, p, tol_rank=tol_rank)
        except spectral.UnsupportedSpectrumError as exc:
            verdict.warnings.append(f"point {p.tolist()} skipped: {exc}")
            continue
        if rep.near_degenerate or rep.warnings:
            verdict.warnings.append(f"point {p.tolist()} skipped: near-degenerate spectrum")
            continue
        if sig is None:
            sig = rep.signature
        elif rep.signature != sig:
            verdict.warnings.append(f"point {p.tolist()} skipped: cluster structure {rep.signature} differs from {sig}")
            continue
        usable.append(p)
    verdict.usable_points = np.array(usable).reshape(-1, n)
    verdict.signature = sig
    if not usable:
        verdict.warnings.append("no usable sample points; distribution checks withheld")
        return verdict
    frames = frames or {}
    k = len(sig)

    def check(idx):
        if len(idx) == 1 and idx[0] in frames:
            return involutive_check(frames[idx[0]], verdict.usable_points, tol)
        fr = [X for i in idx for X in frames.get(i, [])]
        if len(idx) > 1 and len(fr) == sum(sig[i][0] for i in idx):
            return involutive_check(fr, verdict.usable_points, tol)
        return projector_involutive_check(_cluster_basis(A, idx, tol_rank), verdict.usable_points, n)

    for i in range(k):
        res = check((i,))
        verdict.distributions.append({"cluster": i, "rank": sig[i][0], **res.as_dict()})
    for i in range(k):
        for j in range(i + 1, k):
            res = check((i, j))
            verdict.semidirect_sums.append({"clusters": [i, j], **res.as_dict()})
    return verdict


def semidirect_sum_check(A: OperatorField, i: int, j: int, points=None, m_max: int | None = None,
                         tol: float = 1e-8, tol_rank: float = 1e-8) -> dict:
    """tau^(m)(D_i, D_j) vanishing for m = 1..m_max, and involutivity of D_i + D_j."""
    n = A.dim
    pts = default_points(n) if points is None else _pts(points, n)
    m_max = 2 * n if m_max is None else m_max
    reps = [spectral.spectrum(A, p, tol_rank=tol_rank) for p in pts]
    if any(r.near_degenerate for r in reps) or len({r.signature for r in reps}) != 1:
        return {"clusters": [i, j], "withheld": True,
                "reason": "near-degenerate or inconsistent spectrum on the sample"}
    if i == j or max(i, j) >= len(reps[0].clusters):
        raise ValueError("need two distinct cluster indices")
    U = np.stack([r.clusters[i].basis for r in reps])
    V = np.stack([r.clusters[j].basis for r in reps])
    tower = tau_tower(A, m_max, pts)
    levels = []
    for m, T in enumerate(tower, start=1):
        r = _pair_residual(T, U, V)
        levels.append({"m": m, "max_residual": r, "scale": T.scale, "vanishes": r < tol * (1 + T.scale)})
    smallest = next((lv["m"] for lv in levels if lv["vanishes"]), None)
    inv = projector_involutive_check(_cluster_basis(A, (i, j), tol_rank), pts, n)
    return {"clusters": [i, j], "withheld": False, "levels": levels, "smallest_m": smallest,
            "sum": inv.as_dict()}


# ------------------------------------------------------------------ triangular operators


def _kernel_bases(V: np.ndarray, k: int, tol_rank: float = 1e-8):
    """Per-point orthonormal bases of ker V^k (ranks may differ; returned as list)."""
    out = []
    for M in V:
        norm = float(np.linalg.norm(M, 2))
        out.append(spectral.null_space(np.linalg.matrix_power(M, k), tol_rank, norm))
    return out


def _level_on_kernels(T: Tensor12, bases) -> float:
    worst = 0.0
    for c, B in zip(T.comps, bases):
        out = np.einsum("ijk,ja,kb->iab", c, B, B)
        worst = max(worst, float(np.max(np.abs(out), initial=0.0)))
    return worst


def _level_entry(T: Tensor12, k: int, level: int, bases, tol: float) -> dict:
    r = _level_on_kernels(T, bases)
    return {"k": k, "level": level, "kernel_rank": int(bases[0].shape[1]), "max_residual": r,
            "scale": T.scale, "vanishes": r < tol * (1 + T.scale)}


def triangular_vanishing_check(A: OperatorField, points=None, tol: float = 1e-8) -> dict:
    """tau^(k-1) on ker A^k for k = 2..n, and the full tau^(n-1)."""
    n = A.dim
    pts = default_points(n) if points is None else _pts(points, n)
    pre = {"strictly_upper": A.is_strictly_upper, "nilcyclic": spectral.is_nilcyclic(A, pts)}
    V = eval_operator(A, pts).value
    tower = tau_tower(A, max(n - 1, 1), pts)
    per_k = [_level_entry(tower[k - 2], k, k - 1, _kernel_bases(V, k), tol) for k in range(2, n + 1)]
    full = tensor_vanishes(tower[n - 2], tol).as_dict() | {"level": n - 1}
    holds = all(e["vanishes"] for e in per_k) and full["vanishes"]
    return {
        "preconditions": pre,
        "theorem_applies": all(pre.values()),
        "per_k": per_k,
        "full": full,
        "holds": holds,
    }


def one_eigenvalue_triangular_check(A: OperatorField, f, points=None, tol: float = 1e-8) -> dict:
    """Clauses for L = f I + A with A nilcyclic strictly upper triangular.

    Asserted: tau_L^(k-1) on ker(L - f I)^k for 3 <= k <= n-1 and the full
    tau_L^(n-1).  The k = 2 instance is computed and reported on its own.
    """
    n = A.dim
    f = as_expr(f)
    pts = default_points(n) if points is None else _pts(points, n)
    L = OperatorField.scalar(f, n) + A
    pre = {"strictly_upper": A.is_strictly_upper, "nilcyclic": spectral.is_nilcyclic(A, pts)}
    V = eval_operator(A, pts).value
    tower = tau_tower(L, max(n - 1, 1), pts)
    clauses = [_level_entry(tower[k - 2], k, k - 1, _kernel_bases(V, k), tol) for k in range(3, n)]
    k2 = _level_entry(tower[0], 2, 1, _kernel_bases(V, 2), tol) if n >= 2 else None
    full = tensor_vanishes(tower[n - 2], tol).as_dict() | {"level": n - 1}
    notes = []
    if not clauses:
        notes.append(f"kernel clauses 3 <= k <= n-1 are vacuous for n = {n}")
    return {
        "preconditions": pre,
        "theorem_applies": all(pre.values()),
        "clauses": clauses,
        "k2_unasserted": k2,
        "full": full,
        "holds": all(c["vanishes"] for c in clauses) and full["vanishes"],
        "notes": notes,
    }


# ------------------------------------------------------------------ Jordan-chain expansion


def _scalar_at(mu, pts):
    if isinstance(mu, Expr):
        return np.asarray(evaluate(mu, pts), dtype=float)
    return np.full(pts.shape[:-1], float(mu))


def jordan_expansion_residual(A: OperatorField, chainX: spectral.JordanChainData,
                              chainY: spectral.JordanChainData, m: int, p,
                              with_scale: bool = False):
    """max over (alpha, beta) and points of |tau^(m)(X_alpha, Y_beta) - expansion|.

    expansion = sum_{i,j} (-1)^(i+j) C(m,i) C(m,j) (A - mu)^(m-i) (A - nu)^(m-j) [X_(alpha-i), Y_(beta-j)],
    with X_0 = Y_0 = 0.
    """
    if m < 2:
        raise ValueError("the chain expansion is stated for m >= 2")
    n = A.dim
    pts = as_points(p, n)
    T = tau_level(A, m, pts)
    V = eval_operator(A, pts).value
    eye = np.broadcast_to(np.eye(n), V.shape)
    Sm = V - _scalar_at(chainX.eigenvalue, pts)[..., None, None] * eye
    Sn = V - _scalar_at(chainY.eigenvalue, pts)[..., None, None] * eye
    powm = [eye]
    pown = [eye]
    for _ in range(m):
        powm.append(powm[-1] @ Sm)
        pown.append(pown[-1] @ Sn)
    Xs = [eval_vector(X, pts)[0] for X in chainX.fields]
    Ys = [eval_vector(Y, pts)[0] for Y in chainY.fields]
    worst = 0.0
    scale = T.scale
    for a in range(1, chainX.length + 1):
        for b in range(1, chainY.length + 1):
            lhs = np.einsum("...ijk,...j,...k->...i", T.comps, Xs[a - 1], Ys[b - 1])
            rhs = 0.0
            for i in range(min(m, a - 1) + 1):
                for j in range(min(m, b - 1) + 1):
                    br = lie_bracket(chainX.fields[a - 1 - i], chainY.fields[b - 1 - j], pts)
                    c = (-1) ** (i + j) * comb(m, i) * comb(m, j)
                    term = c * np.einsum("...ia,...ab,...b->...i", powm[m - i], pown[m - j], br)
                    scale = max(scale, float(np.max(np.abs(term), initial=0.0)))
                    rhs = rhs + term
            worst = max(worst, float(np.max(np.abs(lhs - rhs), initial=0.0)))
    return (worst, scale) if with_scale else worst


def kernel_bracket_residual(A: OperatorField, X: VectorField, Y: VectorField, m: int, p,
                            with_scale: bool = False):
    """|tau^(m)(X, Y) - A^(2m) [X, Y]| for X, Y in ker A."""
    n = A.dim
    pts = as_points(p, n)
    T = tau_level(A, m, pts)
    V = eval_operator(A, pts).value
    lhs = np.einsum("...ijk,...j,...k->...i", T.comps, eval_vector(X, pts)[0], eval_vector(Y, pts)[0])
    rhs = np.einsum("...ij,...j->...i", np.linalg.matrix_power(V, 2 * m), lie_bracket(X, Y, pts))
    r = float(np.max(np.abs(lhs - rhs), initial=0.0))
    scale = max(T.scale, float(np.max(np.abs(rhs), initial=0.0)))
    return (r, scale) if with_scale else r


__all__ = [
    "DistributionSample", "InvolutivityResult", "VanishingResult", "ScanResult", "IntegrabilityVerdict",
    "default_points", "span_residual", "involutive_check", "projector_involutive_check",
    "tensor_vanishes", "vanishing_on_args", "main_theorem_scan", "integrability_report",
    "semidirect_sum_check", "triangular_vanishing_check", "one_eigenvalue_triangular_check",
    "jordan_expansion_residual", "kernel_bracket_residual",
]
