"""Entry distributions, Wigner matrix sampling and the truncation pipeline.

A sample stores ``W = X / sqrt(n)``; the unscaled entries are available as
``sample.x``.  The pipeline mirrors the three modified matrices used to pass
from finite ``4 + delta`` moments to bounded entries:

    raw  --truncate-->  X_hat = X 1[|X| <= D n^alpha]
         --recenter-->  X_tilde = X_hat - E X_hat
         --rescale--->  X_breve = X_tilde / sigma,   sigma^2 = E X_tilde^2

All four families are symmetric, so ``E X_hat`` is zero analytically; the
recentering step still applies whatever the distribution reports.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import integrate, special, stats

from .errors import ConfigError
from .seeding import stream

FAMILIES = ("rademacher", "gaussian", "student_t", "symmetric_pareto")
DELTA_CAP = 4.0
SAMPLE_MAGIC = b"WIGNERW1"
QUAD_EPSABS = 1e-12


class Stage(str, enum.Enum):
    RAW = "raw"
    TRUNCATED = "truncated"
    RECENTERED = "recentered"
    RESCALED = "rescaled"


@dataclass(frozen=True)
class EntryDistribution:
    """Standardized (mean 0, variance 1) symmetric entry law.

    ``param`` is the degrees of freedom for ``student_t`` and the tail index
    for ``symmetric_pareto``; it is ignored for the light-tailed families.
    ``claimed_delta`` is the delta with ``E|X|^(4+delta) < inf``.
    """

    family: str
    claimed_delta: float
    param: float | None = None

    def __post_init__(self):
        problems = []
        if self.family not in FAMILIES:
            problems.append(f"family: unknown {self.family!r}, expected one of {FAMILIES}")
        elif self.family in ("student_t", "symmetric_pareto"):
            name = "df" if self.family == "student_t" else "tail_index"
            if self.param is None or not self.param > 4:
                problems.append(f"{name}: must be > 4 for {self.family}, got {self.param}")
            elif not self.claimed_delta < self.param - 4:
                problems.append(
                    f"claimed_delta: {self.family}({name}={self.param}) only admits "
                    f"delta < {self.param - 4}, got {self.claimed_delta}"
                )
        if not self.claimed_delta > 0:
            problems.append(f"claimed_delta: must be > 0, got {self.claimed_delta}")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def gaussian(cls, claimed_delta=DELTA_CAP):
        return cls("gaussian", claimed_delta)

    @classmethod
    def rademacher(cls, claimed_delta=DELTA_CAP):
        return cls("rademacher", claimed_delta)

    @classmethod
    def student_t(cls, df, claimed_delta=None):
        if claimed_delta is None:
            claimed_delta = min(DELTA_CAP, (df - 4) / 2)
        return cls("student_t", claimed_delta, float(df))

    @classmethod
    def symmetric_pareto(cls, tail_index, claimed_delta=None):
        if claimed_delta is None:
            claimed_delta = min(DELTA_CAP, (tail_index - 4) / 2)
        return cls("symmetric_pareto", claimed_delta, float(tail_index))

    @property
    def delta(self):
        """``claimed_delta`` capped at 4."""
        return min(self.claimed_delta, DELTA_CAP)

    @property
    def _scale(self):
        # multiplier that brings the raw family to unit variance
        if self.family == "student_t":
            return math.sqrt((self.param - 2) / self.param)
        if self.family == "symmetric_pareto":
            return math.sqrt((self.param - 2) / self.param)
        return 1.0

    def draw(self, rng, size):
        if self.family == "gaussian":
            return rng.standard_normal(size)
        if self.family == "rademacher":
            return np.where(rng.random(size) < 0.5, -1.0, 1.0)
        if self.family == "student_t":
            return self._scale * rng.standard_t(self.param, size)
        # classical Pareto on [1, inf) with a random sign
        magnitude = rng.pareto(self.param, size) + 1.0
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return self._scale * sign * magnitude

    def pdf(self, x):
        """Density of the standardized law (``None`` for Rademacher)."""
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return stats.norm.pdf(x)
        if self.family == "student_t":
            k = self._scale
            return stats.t.pdf(x / k, self.param) / k
        if self.family == "symmetric_pareto":
            c, a = self._scale, self.param
            y = np.abs(x) / c
            return np.where(y >= 1, 0.5 * a * np.maximum(y, 1) ** (-a - 1) / c, 0.0)
        return None

    def tail_prob(self, t):
        """``P(|X| > t)``."""
        t = float(t)
        if self.family == "gaussian":
            return float(special.erfc(t / math.sqrt(2)))
        if self.family == "rademacher":
            return 1.0 if t < 1 else 0.0
        if self.family == "student_t":
            return float(2 * stats.t.sf(t / self._scale, self.param))
        y = t / self._scale
        return 1.0 if y <= 1 else y ** (-self.param)

    def tail_second_moment(self, t):
        """``E X^2 1[|X| > t]``, i.e. the variance lost by truncating at ``t``."""
        t = float(t)
        if self.family == "gaussian":
            return float(
                special.erfc(t / math.sqrt(2)) + math.sqrt(2 / math.pi) * t * math.exp(-t * t / 2)
            )
        if self.family == "rademacher":
            return 1.0 if t < 1 else 0.0
        if self.family == "student_t":
            t = max(t, 0.0)
            val, _ = integrate.quad(lambda x: x * x * self.pdf(x), t, np.inf, epsabs=QUAD_EPSABS, limit=200)
            return 2 * val
        y = t / self._scale
        return 1.0 if y <= 1 else y ** (2 - self.param)

    def truncated_mean(self, t):
        """``E X 1[|X| <= t]``; zero for every supported (symmetric) family."""
        return 0.0

    def truncated_second_moment(self, t):
        """``E X^2 1[|X| <= t]``."""
        return 1.0 - self.tail_second_moment(t)

    def abs_moment(self, r):
        """``E|X|^r``, infinite when the family lacks that moment."""
        if self.family == "rademacher":
            return 1.0
        if self.family == "gaussian":
            return 2 ** (r / 2) * math.gamma((r + 1) / 2) / math.sqrt(math.pi)
        if r >= self.param:
            return math.inf
        k = self._scale
        if self.family == "student_t":
            df = self.param
            return (
                k**r
                * df ** (r / 2)
                * math.gamma((r + 1) / 2)
                * math.gamma((df - r) / 2)
                / (math.sqrt(math.pi) * math.gamma(df / 2))
            )
        return k**r * self.param / (self.param - r)

    def to_config(self):
        out = {"family": self.family, "claimed_delta": repr(float(self.claimed_delta))}
        if self.family == "student_t":
            out["df"] = repr(self.param)
        elif self.family == "symmetric_pareto":
            out["tail_index"] = repr(self.param)
        return out


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    dist: EntryDistribution
    truncation_D: float = 1.0

    def __post_init__(self):
        problems = []
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            problems.append(f"n: must be a positive integer, got {self.n!r}")
        if not self.truncation_D > 0:
            problems.append(f"truncation_D: must be > 0, got {self.truncation_D}")
        if problems:
            raise ConfigError(problems)

    @property
    def alpha(self):
        return 2.0 / (4.0 + self.dist.delta)

    @property
    def threshold(self):
        """Truncation level ``D n^alpha`` for the unscaled entries."""
        return self.truncation_D * self.n**self.alpha

    def with_n(self, n):
        return replace(self, n=int(n))

    def variance_loss_constant(self):
        """C with ``1 - sigma^2 <= C / n`` for every n.

        Markov: ``E X^2 1[|X| > D n^a] <= E|X|^(4+d) / (D n^a)^(2+d)`` and
        ``a (2 + d) >= 1``.
        """
        d = self.dist.delta
        return self.dist.abs_moment(4 + d) / self.truncation_D ** (2 + d)

    def to_config(self):
        out = {"n": str(self.n), "truncation_D": repr(float(self.truncation_D))}
        out.update(self.dist.to_config())
        return out

    @classmethod
    def from_config(cls, mapping, n=None):
        """Build from a flat ``key -> str`` mapping (one config section)."""
        problems = []
        m = {k.lower(): v for k, v in mapping.items()}

        def num(key, kind=float, default=None):
            if key not in m:
                if default is None:
                    problems.append(f"{key}: missing")
                return default
            try:
                return kind(m[key])
            except ValueError:
                problems.append(f"{key}: cannot parse {m[key]!r} as {kind.__name__}")
                return default

        family = m.get("family", "gaussian").strip()
        if n is None:
            n = num("n", int)
        D = num("truncation_d", float, 1.0)
        param = None
        if family == "student_t":
            param = num("df", float)
        elif family == "symmetric_pareto":
            param = num("tail_index", float)
        # heavy tails default to the midpoint of the admissible range, like the classmethods
        default_delta = DELTA_CAP if param is None else min(DELTA_CAP, (param - 4) / 2)
        delta = num("claimed_delta", float, default_delta)
        if problems:
            raise ConfigError(problems)
        try:
            dist = EntryDistribution(family, delta, param)
            return cls(n, dist, D)
        except ConfigError as exc:
            raise ConfigError(problems + exc.problems) from None


@dataclass
class WignerSample:
    """One realization of ``W = X / sqrt(n)`` at some pipeline stage.

    ``bound`` is the stage constant: every ``|X_jk|`` is at most ``bound``
    (infinite for raw samples).
    """

    n: int
    entries: np.ndarray
    seed: int | None
    stage: Stage = Stage.RAW
    spec: EnsembleSpec | None = None
    truncated_count: int = 0
    truncated_rows: int = 0
    bound: float = math.inf
    mean_shift: float = 0.0
    sigma: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.entries * math.sqrt(self.n)

    @classmethod
    def from_matrix(cls, matrix, seed=None, scaled=True):
        """Wrap a hand-made symmetric matrix (``scaled=False`` means it is X)."""
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not exactly symmetric")
        n = a.shape[0]
        if not scaled:
            a = a / math.sqrt(n)
        return cls(n, a, seed)


def sample_raw(spec, seed):
    """Draw W with i.i.d. upper triangle from ``spec.dist``.

    Row ``j`` uses the Philox stream ``(seed, j)`` and fills ``X[j, j:]``.
    """
    n = spec.n
    x = np.empty((n, n))
    for j in range(n):
        row = spec.dist.draw(stream(seed, j), n - j)
        x[j, j:] = row
        x[j:, j] = row
    return WignerSample(n, x / math.sqrt(n), int(seed), Stage.RAW, spec)


def truncate(sample):
    """Zero every entry with ``|X_jk| > D n^alpha``."""
    if sample.stage is not Stage.RAW:
        raise ValueError(f"truncate expects a raw sample, got stage {sample.stage.value}")
    if sample.spec is None:
        raise ValueError("truncate needs the sample's EnsembleSpec")
    t = sample.spec.threshold
    mask = np.abs(sample.entries) > t / math.sqrt(sample.n)
    entries = np.where(mask, 0.0, sample.entries)
    return replace(
        sample,
        entries=entries,
        stage=Stage.TRUNCATED,
        truncated_count=int(np.count_nonzero(np.triu(mask))),
        truncated_rows=int(np.count_nonzero(mask.any(axis=1))),
        bound=t,
    )


def recenter(sample):
    if sample.stage is not Stage.TRUNCATED:
        raise ValueError(f"recenter expects a truncated sample, got stage {sample.stage.value}")
    t = sample.spec.threshold
    mu = sample.spec.dist.truncated_mean(t)
    entries = sample.entries - mu / math.sqrt(sample.n) if mu else sample.entries.copy()
    return replace(sample, entries=entries, stage=Stage.RECENTERED, mean_shift=mu, bound=t + abs(mu))


def rescale(sample):
    if sample.stage is not Stage.RECENTERED:
        raise ValueError(f"rescale expects a recentered sample, got stage {sample.stage.value}")
    t = sample.spec.threshold
    mu = sample.mean_shift
    sigma2 = sample.spec.dist.truncated_second_moment(t) - mu * mu
    if not sigma2 > 0:
        raise ArithmeticError(f"truncated variance is not positive: {sigma2}")
    sigma = math.sqrt(sigma2)
    entries = sample.entries / sigma if sigma != 1.0 else sample.entries.copy()
    return replace(sample, entries=entries, stage=Stage.RESCALED, sigma=sigma, bound=sample.bound / sigma)


def recenter_rescale(sample):
    """Truncated sample -> X_breve (recentered, unit variance)."""
    return rescale(recenter(sample))


def sample_stage(spec, seed, stage=Stage.RAW):
    """Run the pipeline from a fresh raw draw up to ``stage``."""
    stage = Stage(stage)
    s = sample_raw(spec, seed)
    if stage is Stage.RAW:
        return s
    s = truncate(s)
    if stage is Stage.TRUNCATED:
        return s
    s = recenter(s)
    if stage is Stage.RECENTERED:
        return s
    return rescale(s)


def save_sample(path, sample):
    """Flat dump: 8-byte magic, uint64 n (little endian), then n*n float64 row-major."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(SAMPLE_MAGIC + struct.pack("<Q", sample.n))
        fh.write(np.ascontiguousarray(sample.entries, dtype="<f8").tobytes())
    return path


def load_sample(path, seed=None, stage=Stage.RAW, spec=None):
    raw = Path(path).read_bytes()
    if raw[:8] != SAMPLE_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:8]!r}")
    (n,) = struct.unpack("<Q", raw[8:16])
    body = raw[16:]
    if len(body) != 8 * n * n:
        raise ValueError(f"{path}: expected {8 * n * n} payload bytes, found {len(body)}")
    entries = np.frombuffer(body, dtype="<f8").reshape(n, n).astype(float)
    return WignerSample(int(n), entries, seed, Stage(stage), spec)
