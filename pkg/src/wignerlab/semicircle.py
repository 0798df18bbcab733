"""Closed-form semicircle law objects.

All functions accept scalars or numpy arrays.  ``z`` arguments are complex
numbers ``u + iv`` with ``v > 0``; :class:`SpectralPoint` is a thin typed
wrapper for call sites that want validation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

MAX_MOMENT = 60


@dataclass(frozen=True)
class SpectralPoint:
    u: float
    v: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"spectral point needs v > 0, got v={self.v}")

    @property
    def z(self):
        return complex(self.u, self.v)


@dataclass(frozen=True)
class DomainD:
    """``{|u| <= u0, A0/n <= v <= V}``."""

    u0: float
    V: float
    A0: float
    n: int

    def __post_init__(self):
        if not (self.u0 > 0 and self.V > 0 and self.A0 > 0 and self.n >= 1):
            raise ValueError(f"invalid domain {self}")
        if self.v0 > self.V:
            raise ValueError(f"empty domain: v0={self.v0} > V={self.V}")

    @property
    def v0(self):
        return self.A0 / self.n

    def contains(self, z):
        z = np.asarray(z)
        return (np.abs(z.real) <= self.u0) & (z.imag >= self.v0) & (z.imag <= self.V)

    def grid(self, nu, nv):
        """``nu x nv`` points: u evenly spaced, v log-spaced, shape ``(nu, nv)``."""
        u = np.linspace(-self.u0, self.u0, nu)
        v = np.geomspace(self.v0, self.V, nv)
        return u[:, None] + 1j * v[None, :]


def _as_complex(z):
    if isinstance(z, SpectralPoint):
        return z.z
    return z


def sqrt_upper(w):
    """Square root with non-negative imaginary part.

    Principal root, negated where its imaginary part is negative; on the
    positive real axis the principal (non-negative) root is kept.
    """
    r = np.sqrt(np.asarray(w, dtype=complex))
    r = np.where(r.imag < 0, -r, r)
    return r if r.ndim else complex(r)


def density(x):
    x = np.asarray(x, dtype=float)
    out = np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2 * np.pi)
    return out if out.ndim else float(out)


def cdf(x):
    x = np.asarray(x, dtype=float)
    y = np.clip(x, -2.0, 2.0)
    out = 0.5 + y * np.sqrt(4.0 - y * y) / (4 * np.pi) + np.arcsin(y / 2) / np.pi
    out = np.where(x <= -2, 0.0, np.where(x >= 2, 1.0, out))
    return out if out.ndim else float(out)


def stieltjes(z):
    """``s(z) = -z/2 + sqrt(z^2/4 - 1)`` on the branch with ``Im s > 0``.

    Evaluated as ``-1 / (z/2 + sqrt(z^2/4 - 1))`` (the two roots of
    ``s^2 + z s + 1`` multiply to one), which avoids cancellation for large
    ``|z|``.
    """
    z = np.asarray(_as_complex(z), dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("stieltjes requires Im z > 0")
    s = -1.0 / (z / 2 + sqrt_upper(z * z / 4 - 1))
    return s if s.ndim else complex(s)


def b_of_z(z):
    """Stability factor ``z + 2 s(z)``; satisfies ``b^2 = z^2 - 4``."""
    z = np.asarray(_as_complex(z), dtype=complex)
    b = z + 2 * np.asarray(stieltjes(z))
    return b if b.ndim else complex(b)


def gamma_edge(u):
    """Distance ``||u| - 2|`` from the energy to the nearest spectral edge."""
    out = np.abs(np.abs(np.asarray(u, dtype=float)) - 2.0)
    return out if out.ndim else float(out)


def moment(k):
    """Exact k-th moment: Catalan number for even k, 0 for odd k."""
    k = int(k)
    if k < 0:
        raise ValueError(f"moment order must be non-negative, got {k}")
    if k > MAX_MOMENT:
        raise OverflowError(f"moment order {k} exceeds {MAX_MOMENT}")
    if k % 2:
        return 0
    m = k // 2
    return math.comb(2 * m, m) // (m + 1)


def _edge_seed(q):
    # G(-2 + t) = (2/(3 pi)) t^{3/2} - t^{5/2} / (20 pi) + O(t^{7/2})
    t0 = (1.5 * math.pi * q) ** (2.0 / 3.0)
    t1 = (1.5 * math.pi * q + 0.075 * t0**2.5) ** (2.0 / 3.0)
    return -2.0 + t1


def _quantile_scalar(q, xtol):
    if q < 0.01:
        x = _edge_seed(q)
    elif q > 0.99:
        x = -_edge_seed(1.0 - q)
    else:
        x = 0.0
    lo, hi = -2.0, 2.0
    for _ in range(200):
        f = cdf(x) - q
        if f > 0:
            hi = x
        else:
            lo = x
        g = density(x)
        step = f / g if g > 0 else math.inf
        nxt = x - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= xtol or hi - lo <= xtol:
            return nxt
        x = nxt
    return x


def quantile(q, xtol=1e-14):
    """Inverse of :func:`cdf` on (0, 1) (safeguarded Newton)."""
    arr = np.asarray(q, dtype=float)
    if np.any((arr <= 0) | (arr >= 1)) or np.any(np.isnan(arr)):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    if arr.ndim == 0:
        return _quantile_scalar(float(arr), xtol)
    return np.array([_quantile_scalar(float(v), xtol) for v in arr.ravel()]).reshape(arr.shape)


def eigenvalue_quantiles(n):
    """Predicted locations ``gamma_j`` for ``j = 1..n``.

    ``gamma_j`` sits at level ``j/n``; the last one would need
    ``quantile(1)`` and is clamped to the edge 2.
    """
    n = int(n)
    levels = np.arange(1, n) / n
    out = np.empty(n)
    out[: n - 1] = quantile(levels) if n > 1 else []
    out[n - 1] = 2.0
    return out


def write_quantile_table(path, n):
    gammas = eigenvalue_quantiles(n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "n", "gamma_j"])
        for j, g in enumerate(gammas, start=1):
            w.writerow([j, n, repr(float(g))])
    return gammas
