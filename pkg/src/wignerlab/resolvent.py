"""Resolvents, minors and the row-wise error decomposition of ``R_jj``.

Conventions: indices are 0-based, ``m_n^(J) = Tr R^(J) / n`` keeps the full
``n`` in the denominator, and ``X = sqrt(n) W`` are the unscaled entries.

For row ``j`` with ``x = X[j, T_j]`` and ``Rj = R^(j)``::

    eps1 = X_jj / sqrt(n)
    eps2 = -(1/n) sum_{k != l} x_k x_l Rj_kl
    eps3 = -(1/n) sum_k (x_k^2 - 1) Rj_kk
    eps4 = (Tr R - Tr Rj) / n

so that ``1 / R_jj = -z - m_n + eps_j``.  The analogous split of
``eta_j = (1/n) x^T Rj^2 x`` is ``eta0 + eta1 + eta2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import semicircle
from .errors import ConsistencyError, SpectralError
from .semicircle import sqrt_upper

IDENTITY_RTOL = 1e-9
ROUNDOFF_RTOL = 1e-12
LAMBDA_SURROGATE_C = 4.0
SCALE_FACTORS = (2, 4, 10)
SQUARE_POWERS = (1, 2, 4)


def _entries(sample):
    if hasattr(sample, "entries"):
        return np.asarray(sample.entries, dtype=float), getattr(sample, "seed", None)
    return np.asarray(sample, dtype=float), None


def _z(z):
    z = complex(semicircle._as_complex(z))
    if not z.imag > 0:
        raise ValueError(f"resolvent needs Im z > 0, got {z}")
    return z


def identity_tolerance(n, v):
    """Absolute tolerance for exact identities at scale ``v``.

    ``IDENTITY_RTOL`` for ``v >= 10/n``, growing like the conditioning
    ``1/v`` below that.
    """
    return IDENTITY_RTOL * max(1.0, 10.0 / (n * v))


def solve_resolvent(w, z, seed=None):
    """``(W - zI)^{-1}`` by LU with partial pivoting (``W - zI`` is complex symmetric, not Hermitian)."""
    n = w.shape[0]
    a = w.astype(complex)
    a[np.diag_indices(n)] -= z
    try:
        return np.linalg.solve(a, np.eye(n, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"resolvent solve failed at z={z}: {exc}", seed) from exc


def eig_resolvent(w, z):
    lam, u = np.linalg.eigh(w)
    return (u / (lam - z)) @ u.T


@dataclass
class Minor:
    """Resolvent of ``W`` with rows/columns ``J`` removed.

    ``labels[p]`` is the original index sitting at position ``p``.
    """

    J: tuple
    labels: np.ndarray
    R: np.ndarray
    n: int

    def position(self, label):
        pos = np.searchsorted(self.labels, label)
        if pos >= len(self.labels) or self.labels[pos] != label:
            raise KeyError(f"index {label} was removed in minor {self.J}")
        return int(pos)

    @property
    def m_n(self):
        return complex(np.trace(self.R) / self.n)


def minor(sample, J, z):
    w, seed = _entries(sample)
    n = w.shape[0]
    J = tuple(sorted(int(j) for j in J))
    if len(J) > 2:
        raise ValueError(f"minors are limited to |J| <= 2, got {J}")
    if len(set(J)) != len(J) or any(j < 0 or j >= n for j in J):
        raise ValueError(f"J={J} is not a subset of 0..{n - 1}")
    labels = np.setdiff1d(np.arange(n), J)
    sub = w[np.ix_(labels, labels)]
    return Minor(J, labels, solve_resolvent(sub, _z(z), seed), n)


@dataclass
class ResolventBundle:
    z: complex
    R: np.ndarray
    minors: dict
    m_n: complex
    n: int
    seed: int | None = None

    @property
    def m_n_minors(self):
        return {J: mi.m_n for J, mi in self.minors.items()}

    def check(self, w):
        """Raise :class:`ConsistencyError` if a bundle invariant fails."""
        n = self.n
        tol = identity_tolerance(n, self.z.imag)
        asym = np.max(np.abs(self.R - self.R.T))
        if asym > 10 * ROUNDOFF_RTOL / self.z.imag * n:
            raise ConsistencyError(f"R not symmetric: {asym:.3e}")
        a = w - self.z * np.eye(n)
        res = np.max(np.abs(a @ self.R - np.eye(n)))
        if res > tol:
            raise ConsistencyError(f"(W - zI) R != I: residual {res:.3e}")
        if not self.m_n.imag > 0:
            raise ConsistencyError(f"Im m_n = {self.m_n.imag} <= 0")


def resolvent(sample, z, method="solve", minor_sets=()):
    """Resolvent bundle at ``z``; ``method`` is ``"solve"`` or ``"eig"``."""
    w, seed = _entries(sample)
    z = _z(z)
    if method == "solve":
        R = solve_resolvent(w, z, seed)
    elif method == "eig":
        R = eig_resolvent(w, z)
    else:
        raise ValueError(f"unknown resolvent method {method!r}")
    n = w.shape[0]
    minors = {tuple(sorted(J)): minor(w, J, z) for J in minor_sets}
    return ResolventBundle(z, R, minors, complex(np.trace(R) / n), n, seed)


def _row_minors(w, z):
    """All one-row-removed resolvents, stacked: shape ``(n, n-1, n-1)``."""
    n = w.shape[0]
    idx = np.array([np.delete(np.arange(n), j) for j in range(n)])
    subs = w[idx[:, :, None], idx[:, None, :]].astype(complex)
    subs[:, np.arange(n - 1), np.arange(n - 1)] -= z
    eye = np.broadcast_to(np.eye(n - 1, dtype=complex), subs.shape)
    return idx, np.linalg.solve(subs, eye)


@dataclass
class EpsilonDecomposition:
    z: complex
    n: int
    R_diag: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    eps3: np.ndarray
    eps4: np.ndarray
    eps: np.ndarray
    quad_form: np.ndarray
    m_n: complex
    m_n_rows: np.ndarray
    a_n: complex
    a_n_rows: np.ndarray

    @property
    def schur_rjj(self):
        """``1 / (-z + X_jj/sqrt(n) - (1/n) x^T R^(j) x)`` per row."""
        return 1.0 / (-self.z + self.eps1 - self.quad_form)

    @property
    def representation_rjj(self):
        """``-a_n + a_n eps_j R_jj`` per row."""
        return -self.a_n + self.a_n * self.eps * self.R_diag


@dataclass
class _RowData:
    w: np.ndarray
    x: np.ndarray
    R: np.ndarray
    idx: np.ndarray
    Rj: np.ndarray


def _row_data(sample, z):
    w, seed = _entries(sample)
    n = w.shape[0]
    z = _z(z)
    R = solve_resolvent(w, z, seed)
    idx, Rj = _row_minors(w, z)
    x = w * math.sqrt(n)
    return _RowData(w, x, R, idx, Rj)


def _epsilon_from(data, z):
    n = data.w.shape[0]
    rows = np.arange(n)
    xs = data.x[rows[:, None], data.idx]  # x_k = X_jk, k in T_j
    diagRj = np.diagonal(data.Rj, axis1=1, axis2=2)
    quad = np.einsum("jk,jkl,jl->j", xs, data.Rj, xs) / n
    diag_part = np.sum(xs * xs * diagRj, axis=1) / n
    trR = np.trace(data.R)
    trRj = np.trace(data.Rj, axis1=1, axis2=2)
    eps1 = np.diagonal(data.x) / math.sqrt(n)
    eps2 = -(quad - diag_part)
    eps3 = -np.sum((xs * xs - 1.0) * diagRj, axis=1) / n
    eps4 = (trR - trRj) / n
    m_n = complex(trR / n)
    m_rows = trRj / n
    return EpsilonDecomposition(
        z=z,
        n=n,
        R_diag=np.diagonal(data.R).copy(),
        eps1=eps1.astype(complex),
        eps2=eps2,
        eps3=eps3,
        eps4=eps4,
        eps=eps1 + eps2 + eps3 + eps4,
        quad_form=quad,
        m_n=m_n,
        m_n_rows=m_rows,
        a_n=1.0 / (z + m_n),
        a_n_rows=1.0 / (z + m_rows),
    )


def epsilon_terms(sample, z):
    z = _z(z)
    return _epsilon_from(_row_data(sample, z), z)


@dataclass
class EtaTerms:
    eta0: complex
    eta1: complex
    eta2: complex
    eta: complex

    @property
    def parts_sum(self):
        return self.eta0 + self.eta1 + self.eta2


def _eta_parts(xs, Rj, n):
    R2 = Rj @ Rj
    d2 = np.diagonal(R2)
    full = xs @ R2 @ xs / n
    eta0 = np.sum(d2) / n
    eta1 = full - np.sum(xs * xs * d2) / n
    eta2 = np.sum((xs * xs - 1.0) * d2) / n
    return EtaTerms(complex(eta0), complex(eta1), complex(eta2), complex(full))


def eta_terms(sample, j, z):
    """``(eta0, eta1, eta2)`` for row ``j`` together with the unsplit form ``eta``."""
    w, _ = _entries(sample)
    n = w.shape[0]
    if not 0 <= j < n:
        raise ValueError(f"row {j} out of range for n={n}")
    mi = minor(w, (j,), z)
    xs = w[j, mi.labels] * math.sqrt(n)
    return _eta_parts(xs, mi.R, n)


@dataclass
class SelfConsistencyState:
    z: complex
    n: int
    T_n: complex
    Lambda_n: complex
    b: complex
    b_n: complex
    a: complex
    m_n: complex
    s: complex
    residuals: dict = field(default_factory=dict)


def _self_consistency_from(eps, check=True):
    z, n = eps.z, eps.n
    s = complex(semicircle.stieltjes(z))
    b = z + 2 * s
    lam = eps.m_n - s
    T = complex(np.mean(eps.eps * eps.R_diag))
    a = z * z / 4 - 1
    m_sqrt = -z / 2 + sqrt_upper(a + T)
    lam_sqrt = sqrt_upper(a + T) - sqrt_upper(a)
    scale = max(1.0, abs(T))
    residuals = {
        "T_equals_bn_Lambda": abs(T - (z + eps.m_n + s) * lam) / scale,
        "m_sqrt_representation": abs(m_sqrt - eps.m_n) / max(1.0, abs(eps.m_n)),
        "Lambda_sqrt_representation": abs(lam_sqrt - lam) / max(1.0, abs(lam)),
        "a_equals_b2_over_4": abs(a - b * b / 4) / max(1.0, abs(a)),
    }
    state = SelfConsistencyState(z, n, T, lam, b, b + lam, a, eps.m_n, s, residuals)
    if check:
        tol = identity_tolerance(n, z.imag)
        bad = {k: r for k, r in residuals.items() if not r <= tol}
        if bad:
            raise ConsistencyError(f"self-consistency identities failed at z={z}: {bad}")
    return state


def self_consistency(sample, z, check=True):
    return _self_consistency_from(epsilon_terms(sample, z), check=check)


def derivative_fd(sample, z, rel_step=1e-5):
    """Central finite difference of ``m_n`` along ``u`` (holomorphic, so equals ``m_n'``)."""
    w, seed = _entries(sample)
    z = _z(z)
    h = rel_step * z.imag
    n = w.shape[0]
    mp = np.trace(solve_resolvent(w, z + h, seed)) / n
    mm = np.trace(solve_resolvent(w, z - h, seed)) / n
    return complex((mp - mm) / (2 * h))


def identity_residuals(sample, z):
    """Every exact identity at one ``(sample, z)``, as relative residuals.

    Keys: ``schur``, ``representation``, ``trace_difference``,
    ``T_equals_bn_Lambda``, ``Lambda_sqrt_representation``,
    ``m_sqrt_representation``, ``a_equals_b2_over_4``,
    ``derivative_sum`` (sum_j eps4_j R_jj vs Tr R^2 / n),
    ``derivative_fd`` (Tr R^2 / n vs finite differences, relative).
    """
    z = _z(z)
    data = _row_data(sample, z)
    eps = _epsilon_from(data, z)
    n = eps.n
    Rd = eps.R_diag
    scale = np.maximum(1.0, np.abs(Rd))
    out = {
        "schur": float(np.max(np.abs(eps.schur_rjj - Rd) / scale)),
        "representation": float(np.max(np.abs(eps.representation_rjj - Rd) / scale)),
    }
    trace_diff = []
    for j in range(n):
        et = _eta_parts(data.x[j, data.idx[j]], data.Rj[j], n)
        lhs = np.trace(data.R) - np.trace(data.Rj[j])
        rhs = (1 + et.eta) * Rd[j]
        trace_diff.append(abs(lhs - rhs) / max(1.0, abs(lhs)))
    out["trace_difference"] = float(max(trace_diff))
    state = _self_consistency_from(eps, check=False)
    out.update({k: float(v) for k, v in state.residuals.items()})
    R2 = data.R @ data.R
    dm = complex(np.trace(R2) / n)
    out["derivative_sum"] = abs(complex(np.sum(eps.eps4 * Rd)) - dm) / max(1.0, abs(dm))
    out["derivative_fd"] = abs(derivative_fd(data.w, z) - dm) / abs(dm)
    return out


# --- inequality validators -------------------------------------------------


@dataclass
class Check:
    check_id: str
    passed: bool
    margin: float
    n: int
    seed: int | None
    u: float
    v: float
    lhs: float = math.nan
    rhs: float = math.nan

    def as_row(self):
        return {
            "check_id": self.check_id,
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "n": int(self.n),
            "seed": self.seed,
            "u": float(self.u),
            "v": float(self.v),
        }


@dataclass
class ValidationReport:
    checks: list
    lambda_constant: float = math.nan

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self, prefixes=None):
        return [
            c
            for c in self.checks
            if not c.passed and (prefixes is None or c.check_id.split("_")[0] in prefixes)
        ]

    def extend(self, other):
        self.checks.extend(other.checks)
        if not math.isnan(other.lambda_constant):
            if math.isnan(self.lambda_constant):
                self.lambda_constant = other.lambda_constant
            else:
                self.lambda_constant = max(self.lambda_constant, other.lambda_constant)

    def to_json(self):
        return json.dumps([c.as_row() for c in self.checks], indent=1)


def _ineq(check_id, lhs, rhs, ctx):
    """``lhs <= rhs`` elementwise; the worst element is reported.

    Differences below ``ROUNDOFF_RTOL`` relative count as passing since
    several checks are equalities for the unreduced resolvent.
    """
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    margins = rhs - lhs
    k = int(np.argmin(margins))
    slack = ROUNDOFF_RTOL * max(1.0, abs(lhs[k]), abs(rhs[k]))
    return Check(check_id, bool(margins[k] >= -slack), float(margins[k]), lhs=float(lhs[k]), rhs=float(rhs[k]), **ctx)


def validate_inequalities(sample, z, minor_rows=(0,)):
    """Evaluate checks (a)-(g); failures are data in the report, never raised."""
    w, seed = _entries(sample)
    z = _z(z)
    n = w.shape[0]
    u, v = z.real, z.imag
    ctx = {"n": n, "seed": seed, "u": u, "v": v}
    checks = []

    R = solve_resolvent(w, z, seed)
    m = complex(np.trace(R) / n)
    absR2 = np.abs(R) ** 2
    diag = np.diagonal(R)

    # (a) sum_k |R_kl|^2 = Im R_ll / v, on R and on one-row minors
    col = absR2.sum(axis=0)
    checks.append(_ineq("a_column_norm", col, diag.imag / v, ctx))
    eq = float(np.max(np.abs(col - diag.imag / v)))
    checks.append(Check("a_equality", eq <= 1e-10 * max(1.0, np.max(col)), -eq, lhs=eq, rhs=0.0, **ctx))
    for j in minor_rows if n > 1 else ():
        mi = minor(w, (j,), z)
        checks.append(
            _ineq(
                f"a_minor{j}_column_norm",
                (np.abs(mi.R) ** 2).sum(axis=0),
                np.diagonal(mi.R).imag / v,
                ctx,
            )
        )
        # (b) on the minor as well
        checks.append(
            _ineq(f"b_minor{j}_frobenius", (np.abs(mi.R) ** 2).sum() / n, mi.m_n.imag / v, ctx)
        )

    # (b) (1/n) sum |R_kl|^2 <= Im m_n / v
    checks.append(_ineq("b_frobenius", absR2.sum() / n, m.imag / v, ctx))

    # (c) v <= Im R_jj / |R_jj|^2
    checks.append(_ineq("c_v_lower_bound", np.full(n, v), diag.imag / np.abs(diag) ** 2, ctx))

    # (d), (e): compare with v/s
    for s in SCALE_FACTORS:
        Rs = solve_resolvent(w, complex(u, v / s), seed)
        ds = np.diagonal(Rs)
        ms = complex(np.trace(Rs) / n)
        checks.append(_ineq(f"d_shrink_v_by_{s}", np.abs(ds), s * np.abs(diag), ctx))
        checks.append(_ineq(f"e_imag_m_down_{s}", ms.imag, s * m.imag, ctx))
        checks.append(_ineq(f"e_imag_m_up_{s}", m.imag, s * ms.imag, ctx))

    # (f) resolvent-square inequalities
    R2 = R @ R
    absR2sq = np.abs(R2) ** 2
    d2 = np.diagonal(R2)
    checks.append(_ineq("f_trace_square", abs(np.trace(R2)) / n, m.imag / v, ctx))
    checks.append(_ineq("f_square_frobenius", absR2sq.sum() / n, m.imag / v**3, ctx))
    checks.append(_ineq("f_square_diag", np.sum(np.abs(d2) ** 2) / n, m.imag / v**3, ctx))
    for p in SQUARE_POWERS:
        checks.append(
            _ineq(
                f"f_square_diag_power{p}",
                np.sum(np.abs(d2) ** p) / n,
                np.sum(diag.imag**p) / (n * v**p),
                ctx,
            )
        )
    checks.append(_ineq("f_square_column", absR2sq.sum(axis=0), diag.imag / v**3, ctx))

    # (g) |Lambda| <= C min(|T|/|b|, sqrt|T|) for |u| <= 2 + v
    lam_const = math.nan
    if abs(u) <= 2 + v:
        s_z = complex(semicircle.stieltjes(z))
        lam = m - s_z
        T = (z + m + s_z) * lam
        bound = min(abs(T) / abs(z + 2 * s_z), math.sqrt(abs(T)))
        lam_const = abs(lam) / bound if bound > 0 else 0.0
        checks.append(_ineq("g_lambda_vs_T", abs(lam), LAMBDA_SURROGATE_C * bound, ctx))
    return ValidationReport(checks, lam_const)


def to_json_rows(reports):
    rows = []
    for rep in reports:
        rows.extend(c.as_row() for c in rep.checks)
    return rows

