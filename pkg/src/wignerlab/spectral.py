"""Eigendecomposition of samples and eigenvalue / eigenvector statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import semicircle
from .errors import SpectralError


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues; column ``j`` of ``eigenvectors`` pairs with ``eigenvalues[j]``.

    ``eigenvectors`` is ``None`` when only the spectrum was requested.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    source_seed: int | None = None

    @property
    def n(self):
        return len(self.eigenvalues)

    @classmethod
    def planted(cls, eigenvalues, eigenvectors=None):
        return cls(np.sort(np.asarray(eigenvalues, dtype=float), kind="stable"), eigenvectors)


def _matrix_and_seed(sample):
    if hasattr(sample, "entries"):
        return np.asarray(sample.entries, dtype=float), sample.seed
    return np.asarray(sample, dtype=float), None


def decompose(sample, vectors=True):
    """Full symmetric eigendecomposition (LAPACK ``syevd`` through numpy)."""
    w, seed = _matrix_and_seed(sample)
    if not np.all(np.isfinite(w)):
        raise SpectralError("matrix has non-finite entries", seed)
    try:
        if vectors:
            lam, u = np.linalg.eigh(w)
        else:
            lam, u = np.linalg.eigvalsh(w), None
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver did not converge: {exc}", seed) from exc
    # LAPACK already returns ascending order; a stable sort keeps ties in place
    order = np.argsort(lam, kind="stable")
    if not np.array_equal(order, np.arange(len(lam))):
        lam = lam[order]
        u = u[:, order] if u is not None else None
    return SpectralDecomposition(lam, u, seed)


def esd(decomp, x):
    """Empirical spectral distribution ``F_n(x) = #{lambda_k <= x} / n``."""
    lam = decomp.eigenvalues
    out = np.searchsorted(lam, np.asarray(x, dtype=float), side="right") / len(lam)
    return out if np.ndim(out) else float(out)


def counting(decomp, a, b):
    """Number of eigenvalues in the closed interval ``[a, b]``."""
    if a > b:
        raise ValueError(f"empty interval: a={a} > b={b}")
    lam = decomp.eigenvalues
    return int(np.searchsorted(lam, b, side="right") - np.searchsorted(lam, a, side="left"))


def stieltjes_empirical(decomp, z):
    """``m_n(z) = (1/n) sum_j 1 / (lambda_j - z)``; vectorized over ``z``."""
    z = np.asarray(semicircle._as_complex(z), dtype=complex)
    lam = decomp.eigenvalues
    m = np.mean(1.0 / (lam.reshape((-1,) + (1,) * z.ndim) - z), axis=0)
    return m if np.ndim(m) else complex(m)


def cauchy_kernel_density(decomp, u, v):
    """``(1/v) (1/n) sum K((u - lambda)/v)`` with ``K(t) = 1/(1 + t^2)``.

    Equals ``Im m_n(u + iv)``; the kernel is not normalized by ``pi``.
    """
    t = (u - decomp.eigenvalues) / v
    return float(np.mean(1.0 / (1.0 + t * t)) / v)


def kolmogorov_distance(decomp):
    """``sup_x |F_n(x) - G_sc(x)|`` evaluated exactly at the jump points."""
    lam = decomp.eigenvalues
    n = len(lam)
    g = semicircle.cdf(lam)
    # with ties F_n jumps straight from (first-1)/n to last/n
    last = np.searchsorted(lam, lam, side="right")
    first = np.searchsorted(lam, lam, side="left")
    above = np.abs(last / n - g)
    below = np.abs(first / n - g)
    return float(max(above.max(), below.max()))


def lindeberg_ratio(sample, tau):
    """Single-realization ``n^-2 sum_{j,k} X_jk^2 1[|X_jk| >= tau sqrt(n)]``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    x = sample.x
    n = sample.n
    big = np.abs(x) >= tau * math.sqrt(n)
    return float(np.sum(np.where(big, x * x, 0.0)) / n**2)


@dataclass(frozen=True)
class RigidityTable:
    j: np.ndarray
    eigenvalue: np.ndarray
    gamma: np.ndarray
    residual: np.ndarray
    normalized: np.ndarray

    @property
    def max_normalized(self):
        """Empirical rigidity constant: ``max_j |normalized_j|``."""
        return float(np.max(np.abs(self.normalized)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "lambda", "gamma", "residual", "normalized"])
            for row in zip(self.j, self.eigenvalue, self.gamma, self.residual, self.normalized):
                w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])


def rigidity_residuals(decomp, include_last=False, gammas=None):
    """``lambda_j - gamma_j`` and its rescaling by ``n^{2/3} min(j, n-j+1)^{1/3}``.

    ``gamma_n`` is clamped to 2, so index ``n`` is dropped unless
    ``include_last`` is set.
    """
    lam = decomp.eigenvalues
    n = len(lam)
    if gammas is None:
        gammas = semicircle.eigenvalue_quantiles(n)
    j = np.arange(1, n + 1)
    res = lam - gammas
    norm = res * n ** (2.0 / 3.0) * np.minimum(j, n - j + 1) ** (1.0 / 3.0)
    keep = slice(None) if include_last else slice(0, n - 1)
    return RigidityTable(j[keep], lam[keep], gammas[keep], res[keep], norm[keep])


def delocalization_stat(decomp):
    """``n max_{j,k} |u_jk|^2``; equals 1 for perfectly flat vectors, n for basis vectors."""
    if decomp.eigenvectors is None:
        raise ValueError("delocalization needs eigenvectors; decompose with vectors=True")
    u = decomp.eigenvectors
    return float(u.shape[0] * np.max(u * u))


def short_scale_count(decomp, x, xi):
    """``N[x - xi/2n, x + xi/2n] / xi``, an estimate of the density at ``x``."""
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    n = decomp.n
    half = xi / (2 * n)
    return counting(decomp, x - half, x + half) / xi


def trace_moment(sample, k):
    """``(1/n) Tr W^k`` by repeated products (independent of the eigensolver)."""
    w = sample.entries if hasattr(sample, "entries") else np.asarray(sample)
    n = w.shape[0]
    if k == 0:
        return 1.0
    half = np.linalg.matrix_power(w, k // 2)
    if k % 2 == 0:
        return float(np.sum(half * half.T) / n)
    return float(np.sum((half @ w) * half.T) / n)


def write_eigenvalues_csv(path, decomp):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "lambda"])
        for j, lam in enumerate(decomp.eigenvalues, start=1):
            w.writerow([j, repr(float(lam))])


def write_stat_rows_csv(path, rows):
    """Rows of ``(seed, n, stat_name, value)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "n", "stat_name", "value"])
        for seed, n, name, value in rows:
            w.writerow([seed, n, name, repr(float(value))])
