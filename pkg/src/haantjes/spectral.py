"""Pointwise spectral analysis: clustered real eigenvalues, Riesz indices,
generalized eigenspaces, kernel flags and Jordan chains."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exprdsl import Expr, as_points, evaluate
from .fields import OperatorField, VectorField, eval_operator, eval_vector

EPS = np.finfo(float).eps


class UnsupportedSpectrumError(ValueError):
    """Raised when an eigenvalue is not real within tolerance."""


@dataclass(frozen=True)
class Cluster:
    eigenvalue: float
    multiplicity: int
    riesz_index: int
    basis: np.ndarray  # orthonormal columns spanning ker(A - lambda I)^rho
    kernel_ranks: tuple  # dim ker(A - lambda I)^j, j = 1..rho

    def as_dict(self) -> dict:
        return {
            "eigenvalue": float(self.eigenvalue),
            "multiplicity": self.multiplicity,
            "riesz_index": self.riesz_index,
            "kernel_ranks": list(self.kernel_ranks),
            "basis": self.basis.tolist(),
        }


@dataclass(frozen=True)
class SpectrumReport:
    point: np.ndarray
    clusters: tuple
    tol_eig: float
    tol_rank: float
    near_degenerate: bool = False
    warnings: tuple = ()

    @property
    def eigenvalues(self) -> list:
        return [c.eigenvalue for c in self.clusters]

    @property
    def riesz_indices(self) -> list:
        return [c.riesz_index for c in self.clusters]

    @property
    def signature(self) -> tuple:
        """(multiplicity, riesz index) per cluster; compared across points."""
        return tuple((c.multiplicity, c.riesz_index) for c in self.clusters)

    def as_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "clusters": [c.as_dict() for c in self.clusters],
            "tol_eig": self.tol_eig,
            "tol_rank": self.tol_rank,
            "near_degenerate": self.near_degenerate,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class FlagReport:
    ranks: tuple  # dim ker A^j, j = 1..n
    saturation: int  # Riesz index of 0, or 0 when 0 is not an eigenvalue

    @property
    def has_zero_eigenvalue(self) -> bool:
        return self.saturation > 0

    def as_dict(self) -> dict:
        return {"ranks": list(self.ranks), "saturation": self.saturation}


@dataclass(frozen=True)
class JordanChainData:
    """Chain X_1..X_rho with A X_a = mu X_a + X_{a-1}; mu may be a scalar field."""

    eigenvalue: Expr | float
    fields: tuple

    def __post_init__(self):
        if not self.fields:
            raise ValueError("a Jordan chain needs at least one field")
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def length(self) -> int:
        return len(self.fields)

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    def mu(self, pts) -> np.ndarray:
        if isinstance(self.eigenvalue, Expr):
            return np.asarray(evaluate(self.eigenvalue, pts), dtype=float)
        return np.full(np.shape(pts)[:-1], float(self.eigenvalue))


# ---------------------------------------------------------------- linear algebra


def _as_matrix(A, p) -> np.ndarray:
    if isinstance(A, OperatorField):
        pt = as_points(p, A.dim)
        if pt.ndim != 1:
            raise ValueError("spectral analysis works one point at a time")
        return eval_operator(A, pt).value
    M = np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    return M


def null_space(M: np.ndarray, tol_rank: float = 1e-8, ref: float = 1.0) -> np.ndarray:
    """Orthonormal basis of the numerical null space of M.

    Singular values below tol_rank * sigma_max count as zero; a matrix whose
    sigma_max is itself negligible against ``ref`` is treated as zero.
    """
    n = M.shape[1]
    _, s, vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    if smax <= tol_rank * max(ref, 1.0):
        return np.eye(n)
    rank = int(np.sum(s > tol_rank * smax))
    return vt[rank:].T.copy()


def kernel_dim(M: np.ndarray, tol_rank: float = 1e-8, ref: float = 1.0) -> int:
    return null_space(M, tol_rank, ref).shape[1]


def _cluster_threshold(M: np.ndarray, tol_eig: float | None) -> tuple:
    n = M.shape[0]
    norm = float(np.linalg.norm(M, 2))
    radius = float(np.max(np.abs(np.linalg.eigvals(M)), initial=0.0))
    if tol_eig is None:
        tol_eig = 1e-6 * (1.0 + radius)
    # a defective eigenvalue of size k splits by ~eps^(1/k) under rounding
    defect = 10.0 * EPS ** (1.0 / n) * (1.0 + norm)
    return tol_eig, max(tol_eig, defect), norm


def _cluster(eigs: np.ndarray, gap: float) -> list:
    order = np.argsort(eigs.real, kind="stable")
    groups = [[eigs[order[0]]]]
    for e in eigs[order[1:]]:
        if e.real - groups[-1][-1].real <= gap:
            groups[-1].append(e)
        else:
            groups.append([e])
    return groups


def analyze_matrix(M, tol_eig: float | None = None, tol_rank: float = 1e-8, point=None) -> SpectrumReport:
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    tol_eig, gap, norm = _cluster_threshold(M, tol_eig)
    eigs = np.linalg.eigvals(M)
    if np.any(np.abs(eigs.imag) > gap):
        bad = eigs[np.argmax(np.abs(eigs.imag))]
        raise UnsupportedSpectrumError(f"non-real eigenvalue {bad:.6g} (only real spectra are supported)")
    groups = _cluster(eigs, gap)
    warnings = []
    clusters = []
    eye = np.eye(n)
    for g in groups:
        lam = float(np.mean(np.real(g)))
        mult = len(g)
        S = M - lam * eye
        ranks = []
        P = eye
        for _ in range(mult + 1):
            P = P @ S
            ranks.append(kernel_dim(P, tol_rank, norm))
        rho = next((j + 1 for j in range(mult) if ranks[j] == ranks[j + 1]), mult)
        basis = null_space(np.linalg.matrix_power(S, rho), tol_rank, norm)
        if basis.shape[1] != mult:
            warnings.append(f"kernel rank {basis.shape[1]} differs from multiplicity {mult} at eigenvalue {lam:.6g}")
        if ranks[0] == 0:
            warnings.append(f"cluster at {lam:.6g} is split wider than the rank tolerance resolves")
        clusters.append(Cluster(lam, mult, rho, basis, tuple(ranks[:rho])))
    centers = [c.eigenvalue for c in clusters]
    close = any(b - a < 10.0 * gap for a, b in zip(centers, centers[1:]))
    if close:
        warnings.append("near-degenerate: eigenvalue clusters closer than 10x the clustering gap")
    near = close or any(c.kernel_ranks[0] == 0 for c in clusters)
    pt = np.asarray(point, dtype=float) if point is not None else np.zeros(0)
    return SpectrumReport(pt, tuple(clusters), tol_eig, tol_rank, near, tuple(warnings))


def spectrum(A: OperatorField, p, tol_eig: float | None = None, tol_rank: float = 1e-8) -> SpectrumReport:
    """Clustered real spectrum of A at the point p."""
    return analyze_matrix(_as_matrix(A, p), tol_eig, tol_rank, point=as_points(p, A.dim))


@dataclass(frozen=True)
class SpectrumScan:
    reports: tuple
    consistent: bool
    warnings: tuple = field(default=())


def spectrum_scan(A: OperatorField, points, tol_eig=None, tol_rank=1e-8) -> SpectrumScan:
    """Spectrum at every point; clusters are matched across points by sorted position."""
    pts = as_points(points, A.dim).reshape(-1, A.dim)
    reports = tuple(spectrum(A, q, tol_eig, tol_rank) for q in pts)
    sigs = {r.signature for r in reports if not r.near_degenerate}
    consistent = len(sigs) <= 1
    warnings = () if consistent else (f"cluster structure varies across sample points: {sorted(sigs)}",)
    return SpectrumScan(reports, consistent, warnings)


def riesz_index(A, lam: float, p=None, tol_rank: float = 1e-8) -> int:
    """Smallest j with dim ker(A - lam I)^j = dim ker(A - lam I)^(j+1)."""
    M = _as_matrix(A, p)
    n = M.shape[0]
    norm = float(np.linalg.norm(M, 2))
    S = M - lam * np.eye(n)
    P = S
    prev = kernel_dim(P, tol_rank, norm)
    if prev == 0:
        raise ValueError(f"{lam} is not an eigenvalue at this point")
    for j in range(1, n + 1):
        P = P @ S
        cur = kernel_dim(P, tol_rank, norm)
        if cur == prev:
            return j
        prev = cur
    return n


def null_flag(A, p=None, tol_rank: float = 1e-8) -> FlagReport:
    """Ranks of ker A^j for j = 1..n and the index where they saturate."""
    M = _as_matrix(A, p)
    n = M.shape[0]
    norm = float(np.linalg.norm(M, 2))
    ranks = []
    P = np.eye(n)
    for _ in range(n):
        P = P @ M
        ranks.append(kernel_dim(P, tol_rank, norm))
    if ranks[0] == 0:
        return FlagReport(tuple(ranks), 0)
    sat = next((j + 1 for j in range(n - 1) if ranks[j] == ranks[j + 1]), n)
    return FlagReport(tuple(ranks), sat)


def is_nilcyclic(A: OperatorField, points, tol: float = 1e-10) -> bool:
    """A^n = 0 and A^(n-1) != 0 at every sample point (relative to ||A||^k)."""
    pts = as_points(points, A.dim).reshape(-1, A.dim)
    if len(pts) == 0:
        raise ValueError("need at least one sample point")
    n = A.dim
    V = eval_operator(A, pts).value
    norm = np.linalg.norm(V, 2, axis=(-2, -1))
    top = np.linalg.norm(np.linalg.matrix_power(V, n), 2, axis=(-2, -1))
    below = np.linalg.norm(np.linalg.matrix_power(V, n - 1), 2, axis=(-2, -1))
    ref = (1.0 + norm) ** n
    return bool(np.all(top < tol * ref) and np.all(below > tol * ref))


# ---------------------------------------------------------------- Jordan chains


def _complement(vectors: np.ndarray, within: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal directions of span(within) orthogonal to span(vectors)."""
    if vectors.shape[1]:
        q, _ = np.linalg.qr(vectors)
        r = within - q @ (q.T @ within)
    else:
        r = within
    u, s, _ = np.linalg.svd(r, full_matrices=False)
    return u[:, s > tol]


def chain_vectors(M, lam: float, tol_rank: float = 1e-8) -> list:
    """Jordan chains of the cluster lam of M as lists [v_1, ..., v_rho] of arrays.

    v_rho is taken in ker S^k outside ker S^(k-1) + (chains already found),
    then v_(a-1) = S v_a with S = M - lam I.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    norm = float(np.linalg.norm(M, 2))
    S = M - lam * np.eye(n)
    kers = [np.zeros((n, 0))]
    P = np.eye(n)
    while True:
        P = P @ S
        k = null_space(P, tol_rank, norm)
        if k.shape[1] == kers[-1].shape[1] or len(kers) > n:
            break
        kers.append(k)
    rho = len(kers) - 1
    chains = []
    for level in range(rho, 0, -1):
        taken = [c[level - 1] for c in chains if len(c) >= level]
        span = np.column_stack([kers[level - 1]] + taken) if taken else kers[level - 1]
        for v in _complement(span, kers[level], 1e-6).T:
            chain = [v]
            for _ in range(level - 1):
                chain.append(S @ chain[-1])
            chains.append(chain[::-1])
    return chains


def constant_chain(lam: float, vectors) -> JordanChainData:
    n = len(vectors[0])
    return JordanChainData(float(lam), tuple(VectorField(n, tuple(float(c) for c in v)) for v in vectors))


def jordan_chains(A: OperatorField, lam: float, p, tol_rank: float = 1e-8) -> list:
    """Chains sampled at p, wrapped as constant vector fields."""
    M = _as_matrix(A, p)
    return [constant_chain(lam, c) for c in chain_vectors(M, lam, tol_rank)]


def verify_jordan_chain(A: OperatorField, chain: JordanChainData, points) -> float:
    """max over points and a of |A X_a - mu X_a - X_(a-1)|."""
    pts = as_points(points, A.dim)
    V = eval_operator(A, pts).value
    mu = chain.mu(pts)
    prev = 0.0
    worst = 0.0
    for X in chain.fields:
        xv, _ = eval_vector(X, pts)
        r = np.einsum("...ij,...j->...i", V, xv) - mu[..., None] * xv - prev
        worst = max(worst, float(np.max(np.abs(r), initial=0.0)))
        prev = xv
    return worst


__all__ = [
    "UnsupportedSpectrumError", "Cluster", "SpectrumReport", "FlagReport", "JordanChainData",
    "SpectrumScan", "analyze_matrix", "spectrum", "spectrum_scan", "riesz_index", "null_flag",
    "is_nilcyclic", "chain_vectors", "constant_chain", "jordan_chains", "verify_jordan_chain",
    "kernel_dim", "null_space",
]
