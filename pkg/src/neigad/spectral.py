"""Top eigenpairs of the adjacency matrix and the spectral neighbor-information tools built on them.

The solver is a thick-restart Lanczos iteration with full (two-pass)
reorthogonalization. Restarting keeps the best Ritz vectors plus the current
residual direction, which spans the same subspace an implicit QR restart would
produce, so it behaves like ARPACK's implicitly restarted method without the
bulge-chasing bookkeeping.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .graph import FeatureMatrix, ParameterError, SparseGraph

DEFAULT_T = 4
DEFAULT_TOL = 1e-10
DEFAULT_LAMBDA_FLOOR = 1e-6
DENSE_ORACLE_LIMIT = 1024
CLUSTER_GAP = 1e-6


class ConvergenceError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ClusteredSpectrumWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in descending order with unit-norm, sign-canonical eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    clustered: np.ndarray = field(default=None)
    restarts: int = 0
    matvecs: int = 0

    def __post_init__(self):
        vecs = np.asfortranarray(self.eigenvectors, dtype=np.float64)
        object.__setattr__(self, "eigenvectors", vecs)
        if self.clustered is None:
            object.__setattr__(self, "clustered", _cluster_flags(self.eigenvalues))

    @property
    def t(self) -> int:
        return self.eigenvalues.size

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    def take(self, t: int) -> "EigenPairs":
        return EigenPairs(
            self.eigenvalues[:t],
            self.eigenvectors[:, :t],
            self.residuals[:t],
            self.clustered[:t],
            self.restarts,
            self.matvecs,
        )


@dataclass(frozen=True)
class AugmentedFeatures:
    base_d: int
    t: int
    values: np.ndarray
    scale: float

    def as_features(self) -> FeatureMatrix:
        return FeatureMatrix(self.values)


@dataclass(frozen=True)
class NeighborResidual:
    """Per-eigenpair max-over-nodes deviation from the neighbor-average identity.

    Pairs whose eigenvalue is below the floor carry ``nan`` and ``skipped=True``.
    """

    values: np.ndarray
    skipped: np.ndarray

    @property
    def max(self) -> float:
        checked = self.values[~self.skipped]
        return float(checked.max()) if checked.size else 0.0


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive (near-ties go to the lowest index)."""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.ndim == 1:
        return canonical_signs(vectors[:, None])[:, 0]
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        mags = np.abs(col)
        top = mags.max() if col.size else 0.0
        if top == 0.0:
            continue
        idx = int(np.flatnonzero(mags >= top * (1.0 - 1e-9))[0])
        if col[idx] < 0:
            vectors[:, k] = -col
    return vectors


def _cluster_flags(values: np.ndarray, extra: Optional[float] = None) -> np.ndarray:
    vals = np.asarray(values, dtype=np.float64)
    flags = np.zeros(vals.size, dtype=bool)
    if vals.size > 1:
        close = np.abs(np.diff(vals)) <= CLUSTER_GAP
        flags[:-1] |= close
        flags[1:] |= close
    if extra is not None and vals.size:
        flags[-1] |= abs(vals[-1] - extra) <= CLUSTER_GAP
    return flags


def _as_operator(g) -> sp.csr_matrix:
    if isinstance(g, SparseGraph):
        return g.adjacency()
    return sp.csr_matrix(g)


def top_eigenpairs(
    g,
    t: int = DEFAULT_T,
    tol: float = DEFAULT_TOL,
    max_iter: int = 1000,
    *,
    mode: str = "LA",
    ncv: Optional[int] = None,
    max_t: int = 10,
    seed: int = 0,
) -> EigenPairs:
    """Compute the ``t`` largest eigenpairs of the symmetric adjacency of ``g``.

    ``mode="LA"`` selects largest algebraic eigenvalues, ``"LM"`` largest
    magnitude. ``tol`` bounds ``||A u - lambda u||_2`` for every returned pair,
    ``max_iter`` bounds the number of restart cycles. Exact multiplicities are
    only resolved when the Krylov space is exhausted; pairs whose values sit
    within 1e-6 of a neighbour are flagged in ``clustered``.
    """
    a = _as_operator(g)
    n = a.shape[0]
    if n == 0:
        raise ParameterError("graph is empty")
    if t < 1 or t > n:
        raise ParameterError(f"need 1 <= t <= n, got t={t}, n={n}")
    if t > max_t:
        raise ParameterError(f"t={t} exceeds the cap of {max_t}; raise max_t to override")
    if mode not in ("LA", "LM"):
        raise ParameterError(f"unknown mode {mode!r}")
    if tol <= 0:
        raise ParameterError("tol must be positive")

    m = ncv if ncv is not None else max(2 * t + 10, 20)
    m = int(min(max(m, t + 2), n))
    keep = min(m - 1, t + (m - t) // 2)
    rng = np.random.default_rng(seed)

    basis = np.zeros((n, m + 1))
    proj = np.zeros((m, m))
    v = rng.standard_normal(n)
    basis[:, 0] = v / np.linalg.norm(v)
    start = 0
    matvecs = 0
    scale = 1.0
    best_res = None

    for restart in range(max_iter + 1):
        beta = 0.0
        for j in range(start, m):
            w = a @ basis[:, j]
            matvecs += 1
            q = basis[:, : j + 1]
            h = q.T @ w
            w -= q @ h
            h2 = q.T @ w
            w -= q @ h2
            h += h2
            proj[: j + 1, j] = h
            proj[j, :j] = h[:j]
            scale = max(scale, float(np.abs(h).max()))
            beta = float(np.linalg.norm(w))
            if beta > 1e-12 * scale:
                basis[:, j + 1] = w / beta
            else:
                beta = 0.0
                if j + 1 < n:
                    basis[:, j + 1] = _fresh_direction(rng, basis[:, : j + 1])
                else:
                    basis[:, j + 1] = 0.0

        theta, s = np.linalg.eigh(proj)
        key = theta if mode == "LA" else np.abs(theta)
        order = np.argsort(-key, kind="stable")
        theta, s = theta[order], s[:, order]
        estimates = np.abs(beta * s[m - 1, :])

        if np.all(estimates[:t] <= tol) or restart == max_iter:
            vecs = basis[:, :m] @ s[:, :t]
            vals = theta[:t]
            true_res = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
            matvecs += t
            best_res = true_res
            if np.all(true_res <= tol):
                extra = theta[t] if t < m else None
                flags = _cluster_flags(vals, extra)
                if flags.any():
                    warnings.warn(
                        "clustered eigenvalues: per-vector results are only defined up to the invariant subspace",
                        ClusteredSpectrumWarning,
                        stacklevel=2,
                    )
                vecs, vals, true_res = _polish(a, vecs, vals, mode)
                return EigenPairs(vals, canonical_signs(vecs), true_res, flags, restart, matvecs)
            if restart == max_iter:
                break

        if m == n:
            # Krylov space exhausted: Ritz pairs are exact up to rounding.
            # Landing here means tol is below the achievable floor.
            break
        # thick restart: keep leading Ritz vectors, continue from the residual direction
        kept = basis[:, :m] @ s[:, :keep]
        basis[:, :keep] = kept
        basis[:, keep] = basis[:, m]
        basis[:, keep + 1 :] = 0.0
        proj[:] = 0.0
        proj[np.arange(keep), np.arange(keep)] = theta[:keep]
        coupling = beta * s[m - 1, :keep]
        proj[:keep, keep] = coupling
        proj[keep, :keep] = coupling
        start = keep

    raise ConvergenceError(
        f"top_eigenpairs did not reach tol={tol:g}; achieved residuals {best_res}", residuals=best_res
    )


def _fresh_direction(rng, q: np.ndarray) -> np.ndarray:
    for _ in range(10):
        v = rng.standard_normal(q.shape[0])
        v -= q @ (q.T @ v)
        v -= q @ (q.T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    raise ConvergenceError("could not extend the Krylov basis")


def _polish(a, vecs, vals, mode):
    """One Rayleigh-Ritz pass on the converged block; restores exact orthonormality."""
    q, _ = np.linalg.qr(vecs)
    aq = a @ q
    small = q.T @ aq
    small = 0.5 * (small + small.T)
    theta, s = np.linalg.eigh(small)
    key = theta if mode == "LA" else np.abs(theta)
    order = np.argsort(-key, kind="stable")
    theta, s = theta[order], s[:, order]
    out = q @ s
    res = np.linalg.norm(aq @ s - out * theta, axis=0)
    return out, theta, res


def dense_eig_oracle(g) -> EigenPairs:
    """Full spectrum via dense ``eigh``; a brute-force check on the iterative solver."""
    a = _as_operator(g)
    n = a.shape[0]
    if n > DENSE_ORACLE_LIMIT:
        raise ParameterError(f"dense oracle refuses n={n} > {DENSE_ORACLE_LIMIT}")
    dense = a.toarray()
    vals, vecs = np.linalg.eigh(dense)
    vals, vecs = vals[::-1].copy(), vecs[:, ::-1]
    vecs = canonical_signs(vecs)
    res = np.linalg.norm(dense @ vecs - vecs * vals, axis=0)
    return EigenPairs(vals, vecs, res)


def neighbor_average_residual(
    g: SparseGraph, pairs: EigenPairs, lambda_floor: float = DEFAULT_LAMBDA_FLOOR
) -> NeighborResidual:
    """max_j |u_j - (1/lambda) * sum of u over the neighbors of j|, per eigenpair."""
    if pairs.n != g.n:
        raise ValueError(f"eigenvectors have {pairs.n} rows, graph has {g.n} nodes")
    neighbor_sums = g.adjacency() @ pairs.eigenvectors
    values = np.full(pairs.t, np.nan)
    skipped = np.abs(pairs.eigenvalues) < lambda_floor
    for k in np.flatnonzero(~skipped):
        diff = pairs.eigenvectors[:, k] - neighbor_sums[:, k] / pairs.eigenvalues[k]
        values[k] = np.abs(diff).max() if diff.size else 0.0
    return NeighborResidual(values, skipped)


def augment_features(x: FeatureMatrix, pairs: EigenPairs, scale: float = 1.0) -> AugmentedFeatures:
    """Append ``scale`` times the eigenvector columns to ``x``."""
    if scale <= 0:
        raise ParameterError("scale must be positive")
    if pairs.n != x.n:
        raise ValueError(f"eigenvectors have {pairs.n} rows, features have {x.n}")
    values = np.hstack([x.values, scale * pairs.eigenvectors])
    return AugmentedFeatures(x.d, pairs.t, values, float(scale))


def ni_score(g: SparseGraph, u: np.ndarray):
    """Neighbor-information reconstruction error of a unit eigenvector.

    The implicit encoder/decoder applies the adjacency four times, so the
    reconstruction is ``A^4 u``. Returns the per-node squared errors and their sum.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (g.n,):
        raise ValueError(f"vector has shape {u.shape}, expected ({g.n},)")
    if abs(np.linalg.norm(u) - 1.0) > 1e-8:
        raise ValueError("u must have unit L2 norm")
    a = g.adjacency()
    recon = u
    for _ in range(4):
        recon = a @ recon
    per_node = (u - recon) ** 2
    return per_node, float(per_node.sum())


def ni_score_exact(eigenvalue: float) -> float:
    """Closed form of :func:`ni_score`'s total for an exact eigenpair."""
    return (1.0 - eigenvalue**4) ** 2


def concat_loss_additivity_check(x, x_rec, u, u_rec):
    """Return (lhs, rhs, |lhs - rhs|) for the column-concatenation loss identity.

    lhs is the squared Frobenius error of the concatenated matrices, rhs the
    feature error plus one squared vector error per appended column.
    """
    x, x_rec = np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(x_rec, float))
    u, u_rec = np.asarray(u, float), np.asarray(u_rec, float)
    if u.ndim == 1:
        u = u[:, None]
    if u_rec.ndim == 1:
        u_rec = u_rec[:, None]
    if x.shape != x_rec.shape or u.shape != u_rec.shape or x.shape[0] != u.shape[0]:
        raise ValueError(f"shape mismatch: X {x.shape}, X' {x_rec.shape}, U {u.shape}, U' {u_rec.shape}")
    lhs = float(np.sum((np.hstack([x, u]) - np.hstack([x_rec, u_rec])) ** 2))
    rhs = float(np.sum((x - x_rec) ** 2))
    for k in range(u.shape[1]):
        rhs += float(np.sum((u[:, k] - u_rec[:, k]) ** 2))
    return lhs, rhs, abs(lhs - rhs)


def write_eigenpairs_csv(pairs: EigenPairs, fh) -> None:
    """One column per eigenvector; the header row holds the eigenvalues."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([repr(float(v)) for v in pairs.eigenvalues])
    for row in pairs.eigenvectors:
        writer.writerow([repr(float(v)) for v in row])


def read_eigenpairs_csv(fh):
    rows = list(csv.reader(fh))
    vals = np.array([float(c) for c in rows[0]])
    vecs = np.array([[float(c) for c in r] for r in rows[1:]]).reshape(-1, vals.size)
    return vals, vecs
