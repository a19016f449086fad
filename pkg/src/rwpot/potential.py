"""Laws of the single-site potential V(0) and their transforms.

A potential law is one of four closed-form families on [0, inf) --
point mass, Bernoulli, exponential, Pareto -- optionally wrapped by the
cutoff truncation that keeps the upper tail intact and collapses everything
below the cutoff c to the single point E[V | V < c].  Values are always
plain nonnegative reals in potential units; the lambda rescaling happens in
the transforms, never in the law itself.

Laplace transforms are exact where a closed form exists and adaptive
quadrature (absolute error <= 1e-10) otherwise; that precision is far below
any Monte Carlo noise in the package.

Spec-string grammar for configs and the CLI::

    pointmass:v | bernoulli:p,v | exp:rate | pareto:a,xm | trunc(<spec>):c
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import ConfigError, DegenerateTruncationError

POINTMASS = "pointmass"
BERNOULLI = "bernoulli"
EXPONENTIAL = "exp"
PARETO = "pareto"
TRUNCATED = "trunc"

# kind codes for the flattened representation consumed by numba kernels
KERNEL_POINTMASS = 0
KERNEL_BERNOULLI = 1
KERNEL_EXPONENTIAL = 2
KERNEL_PARETO = 3

_QUAD_ABS_TOL = 1e-12


@dataclass(frozen=True)
class PotentialDistribution:
    """Immutable description of the law of V(0); safe to share across workers."""

    kind: str
    params: tuple[float, ...] = ()
    base: "PotentialDistribution | None" = None
    cutoff: float | None = None

    def __post_init__(self):
        k = self.kind
        if k == POINTMASS:
            (v,) = self.params
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"point mass value must be finite >= 0, got {v}")
        elif k == BERNOULLI:
            p, v = self.params
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"bernoulli weight must lie in [0,1], got {p}")
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"bernoulli value must be finite >= 0, got {v}")
        elif k == EXPONENTIAL:
            (rate,) = self.params
            if not (math.isfinite(rate) and rate > 0):
                raise ConfigError(f"exponential rate must be finite > 0, got {rate}")
        elif k == PARETO:
            a, xm = self.params
            if not (a > 0 and xm > 0):
                raise ConfigError(f"pareto needs tail index > 0 and scale > 0, got {a}, {xm}")
        elif k == TRUNCATED:
            if self.base is None or self.cutoff is None or self.cutoff <= 0:
                raise ConfigError("truncation needs a base law and a positive cutoff")
            if self.base.kind == TRUNCATED:
                raise ConfigError("nested truncation is not supported")
            # fails fast when there is no mass below the cutoff
            tail_and_conditional_mean(self.base, self.cutoff)
        else:
            raise ConfigError(f"unknown potential kind {k!r}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def point_mass(v: float) -> "PotentialDistribution":
        return PotentialDistribution(POINTMASS, (float(v),))

    @staticmethod
    def bernoulli(p: float, v: float) -> "PotentialDistribution":
        return PotentialDistribution(BERNOULLI, (float(p), float(v)))

    @staticmethod
    def exponential(rate: float) -> "PotentialDistribution":
        return PotentialDistribution(EXPONENTIAL, (float(rate),))

    @staticmethod
    def pareto(a: float, xm: float) -> "PotentialDistribution":
        return PotentialDistribution(PARETO, (float(a), float(xm)))

    @staticmethod
    def truncated(base: "PotentialDistribution", cutoff: float) -> "PotentialDistribution":
        return PotentialDistribution(TRUNCATED, (), base=base, cutoff=float(cutoff))

    # -- convenience -------------------------------------------------------

    def spec_string(self) -> str:
        return format_mu(self)

    def mean(self) -> float:
        return mean(self)

    def __str__(self) -> str:  # CSV-friendly
        return format_mu(self)


# ---------------------------------------------------------------------------
# survival / masses


def survival(mu: PotentialDistribution, z: float) -> float:
    """P[V >= z]; atoms at z are included (half-open convention [lo, hi))."""
    if z <= 0:
        return 1.0
    k = mu.kind
    if k == POINTMASS:
        return 1.0 if z <= mu.params[0] else 0.0
    if k == BERNOULLI:
        p, v = mu.params
        if v == 0:
            return 0.0
        return p if z <= v else 0.0
    if k == EXPONENTIAL:
        return math.exp(-mu.params[0] * z)
    if k == PARETO:
        a, xm = mu.params
        return 1.0 if z <= xm else (xm / z) ** a
    # truncated: upper tail of the base plus the collapsed atom
    below_p = 1.0 - survival(mu.base, mu.cutoff)
    m = tail_and_conditional_mean(mu.base, mu.cutoff)[1]
    s = survival(mu.base, max(z, mu.cutoff))
    if z <= m:
        s += below_p
    return s


def interval_mass(mu: PotentialDistribution, lo: float, hi: float) -> float:
    """P[V in [lo, hi)); hi = inf allowed."""
    s_hi = 0.0 if math.isinf(hi) else survival(mu, hi)
    return max(0.0, survival(mu, lo) - s_hi)


def mean(mu: PotentialDistribution) -> float:
    k = mu.kind
    if k == POINTMASS:
        return mu.params[0]
    if k == BERNOULLI:
        p, v = mu.params
        return p * v
    if k == EXPONENTIAL:
        return 1.0 / mu.params[0]
    if k == PARETO:
        a, xm = mu.params
        return a * xm / (a - 1.0) if a > 1.0 else math.inf
    tail_p, m = tail_and_conditional_mean(mu.base, mu.cutoff)
    return (1.0 - tail_p) * m + _tail_first_moment(mu.base, mu.cutoff)


def _tail_first_moment(mu: PotentialDistribution, c: float) -> float:
    """E[V ; V >= c] for a simple (untruncated) law."""
    k = mu.kind
    if k == POINTMASS:
        v = mu.params[0]
        return v if v >= c else 0.0
    if k == BERNOULLI:
        p, v = mu.params
        return p * v if 0 < v and v >= c else 0.0
    if k == EXPONENTIAL:
        rate = mu.params[0]
        c = max(c, 0.0)
        return (c + 1.0 / rate) * math.exp(-rate * c)
    if k == PARETO:
        a, xm = mu.params
        c = max(c, xm)
        if a <= 1.0:
            return math.inf
        return a * xm**a * c ** (1.0 - a) / (a - 1.0)
    raise ConfigError("tail moment of a truncated law is not needed")


# ---------------------------------------------------------------------------
# operations


def laplace(mu: PotentialDistribution, t: float) -> float:
    """E[e^{-t V}] for t >= 0; exact closed forms, quadrature for Pareto tails."""
    if not (isinstance(t, (int, float)) and math.isfinite(t)):
        raise ConfigError(f"laplace argument must be finite, got {t}")
    if t < 0:
        raise ConfigError(f"laplace argument must be >= 0, got {t}")
    if t == 0:
        return 1.0
    k = mu.kind
    if k == POINTMASS:
        return math.exp(-t * mu.params[0])
    if k == BERNOULLI:
        p, v = mu.params
        return 1.0 - p + p * math.exp(-t * v)
    if k == EXPONENTIAL:
        rate = mu.params[0]
        return rate / (rate + t)
    if k == PARETO:
        a, xm = mu.params
        return _pareto_tail_laplace(a, xm, xm, t)
    # truncated
    below_p, m = 1.0 - survival(mu.base, mu.cutoff), tail_and_conditional_mean(mu.base, mu.cutoff)[1]
    return below_p * math.exp(-t * m) + _tail_laplace(mu.base, mu.cutoff, t)


def _tail_laplace(mu: PotentialDistribution, c: float, t: float) -> float:
    """E[e^{-tV} ; V >= c] for a simple law."""
    k = mu.kind
    if k == POINTMASS:
        v = mu.params[0]
        return math.exp(-t * v) if v >= c else 0.0
    if k == BERNOULLI:
        p, v = mu.params
        out = 0.0
        if 0 >= c:
            out += (1.0 - p)
        if v >= c and v > 0:
            out += p * math.exp(-t * v)
        elif v >= c and v == 0:
            out += p
        return out
    if k == EXPONENTIAL:
        rate = mu.params[0]
        c = max(c, 0.0)
        return rate / (rate + t) * math.exp(-(rate + t) * c)
    if k == PARETO:
        a, xm = mu.params
        return _pareto_tail_laplace(a, xm, max(c, xm), t)
    raise ConfigError("tail laplace of a truncated law is not needed")


def _pareto_tail_laplace(a: float, xm: float, c: float, t: float) -> float:
    # integral of e^{-tz} a xm^a z^{-a-1} over [c, inf); substituting z = c/u
    # maps it to a smooth integral on (0, 1]
    def f(u):
        return math.exp(-t * c / u) * u ** (a - 1.0)

    val, _err = integrate.quad(f, 0.0, 1.0, epsabs=_QUAD_ABS_TOL, epsrel=1e-12, limit=200)
    return a * (xm / c) ** a * val


def tail_and_conditional_mean(mu: PotentialDistribution, cutoff: float) -> tuple[float, float]:
    """(P[V >= c], E[V | V < c]); raises when no mass sits below the cutoff."""
    if not (cutoff > 0):
        raise ConfigError(f"cutoff must be positive, got {cutoff}")
    if mu.kind == TRUNCATED:
        raise ConfigError("tail/conditional mean of a truncated law is not supported")
    tail_p = survival(mu, cutoff)
    below_p = 1.0 - tail_p
    if below_p <= 0.0:
        raise DegenerateTruncationError(
            f"{format_mu(mu)} has no mass below {cutoff}; conditional mean undefined"
        )
    k = mu.kind
    if k == POINTMASS:
        below_mean = mu.params[0]  # whole mass below, tail_p == 0 here
    elif k == BERNOULLI:
        p, v = mu.params
        below_mean = (p * v if v < cutoff else 0.0) / below_p
    elif k == EXPONENTIAL:
        rate = mu.params[0]
        below_mean = (1.0 / rate - (cutoff + 1.0 / rate) * math.exp(-rate * cutoff)) / below_p
    else:  # pareto
        a, xm = mu.params
        if cutoff <= xm:  # below_p == 0, handled above
            below_mean = 0.0
        elif a == 1.0:
            below_mean = xm * math.log(cutoff / xm) / below_p
        else:
            below_mean = a * xm**a * (cutoff ** (1.0 - a) - xm ** (1.0 - a)) / (1.0 - a) / below_p
    return tail_p, below_mean


def truncate(mu: PotentialDistribution, eps: float, lam: float) -> PotentialDistribution:
    """Cutoff truncation at c = eps/lam: the tail survives, the rest collapses
    to its conditional mean.  Point masses below the cutoff are unchanged."""
    if not (eps > 0 and lam > 0):
        raise ConfigError("truncation needs eps > 0 and lambda > 0")
    return PotentialDistribution.truncated(mu, eps / lam)


def sample(mu: PotentialDistribution, u: float) -> float:
    """Inverse-CDF transform of a uniform u in [0,1); deterministic in u."""
    k = mu.kind
    if k == POINTMASS:
        return mu.params[0]
    if k == BERNOULLI:
        p, v = mu.params
        return v if u >= 1.0 - p else 0.0
    if k == EXPONENTIAL:
        return -math.log1p(-u) / mu.params[0]
    if k == PARETO:
        a, xm = mu.params
        return xm * (1.0 - u) ** (-1.0 / a)
    x = sample(mu.base, u)
    if x >= mu.cutoff:
        return x
    return tail_and_conditional_mean(mu.base, mu.cutoff)[1]


def sample_array(mu: PotentialDistribution, u: np.ndarray) -> np.ndarray:
    """Vectorized sample(); bit-identical to the scalar version."""
    k = mu.kind
    if k == POINTMASS:
        return np.full_like(u, mu.params[0], dtype=float)
    if k == BERNOULLI:
        p, v = mu.params
        return np.where(u >= 1.0 - p, v, 0.0)
    if k == EXPONENTIAL:
        return -np.log1p(-u) / mu.params[0]
    if k == PARETO:
        a, xm = mu.params
        return xm * (1.0 - u) ** (-1.0 / a)
    x = sample_array(mu.base, u)
    m = tail_and_conditional_mean(mu.base, mu.cutoff)[1]
    return np.where(x >= mu.cutoff, x, m)


# ---------------------------------------------------------------------------
# decomposition helpers used by the integral transforms


def decompose(mu: PotentialDistribution):
    """Split the law into atoms [(x, w)] and an absolutely continuous part
    (density, lo, hi, scale) or None, where `scale` is the density's natural
    width (quadratures place breakpoints around it).  Exact; used by the
    cost-integral transforms."""
    k = mu.kind
    if k == POINTMASS:
        return [(mu.params[0], 1.0)], None
    if k == BERNOULLI:
        p, v = mu.params
        atoms = [(0.0, 1.0 - p), (v, p)] if v > 0 else [(0.0, 1.0)]
        return [(x, w) for x, w in atoms if w > 0], None
    if k == EXPONENTIAL:
        rate = mu.params[0]
        return [], (lambda z: rate * math.exp(-rate * z), 0.0, math.inf, 1.0 / rate)
    if k == PARETO:
        a, xm = mu.params
        return [], (lambda z: a * xm**a * z ** (-a - 1.0), xm, math.inf, xm)
    # truncated: atom at the conditional mean + clipped base
    below_p = 1.0 - survival(mu.base, mu.cutoff)
    m = tail_and_conditional_mean(mu.base, mu.cutoff)[1]
    atoms, cont = decompose(mu.base)
    out_atoms = [(m, below_p)] if below_p > 0 else []
    out_atoms += [(x, w) for x, w in atoms if x >= mu.cutoff]
    if cont is None:
        return out_atoms, None
    dens, lo, hi, scale = cont
    lo = max(lo, mu.cutoff)
    if lo >= hi:
        return out_atoms, None
    return out_atoms, (dens, lo, hi, scale)


def kernel_params(mu: PotentialDistribution) -> tuple[int, float, float, float, float]:
    """(kind code, p0, p1, cutoff, collapsed mean) for the numba samplers.

    cutoff = +inf encodes 'no truncation'.
    """
    if mu.kind == TRUNCATED:
        code, p0, p1, _, _ = kernel_params(mu.base)
        m = tail_and_conditional_mean(mu.base, mu.cutoff)[1]
        return code, p0, p1, mu.cutoff, m
    if mu.kind == POINTMASS:
        return KERNEL_POINTMASS, mu.params[0], 0.0, math.inf, 0.0
    if mu.kind == BERNOULLI:
        return KERNEL_BERNOULLI, mu.params[0], mu.params[1], math.inf, 0.0
    if mu.kind == EXPONENTIAL:
        return KERNEL_EXPONENTIAL, mu.params[0], 0.0, math.inf, 0.0
    return KERNEL_PARETO, mu.params[0], mu.params[1], math.inf, 0.0


@lru_cache(maxsize=64)
def _log_laplace_table_cached(mu_spec: str, lam: float, length: int) -> np.ndarray:
    mu = parse_mu(mu_spec)
    out = np.empty(length)
    out[0] = 0.0
    for ell in range(1, length):
        out[ell] = -math.log(laplace(mu, lam * ell))
    return out


def log_laplace_table(mu: PotentialDistribution, lam: float, length: int) -> np.ndarray:
    """Table of -log E[e^{-lam*ell*V}] for ell = 0..length-1.

    This is the per-site cost of an integer local time ell in the
    environment-averaged weight; kernels index it with the running visit
    count.  Cached per (law, lambda).
    """
    return _log_laplace_table_cached(format_mu(mu), float(lam), int(length))


# ---------------------------------------------------------------------------
# spec-string grammar


def parse_mu(spec: str) -> PotentialDistribution:
    s = spec.strip()
    if s.startswith(f"{TRUNCATED}("):
        depth, i = 0, len(TRUNCATED)
        for j in range(i, len(s)):
            if s[j] == "(":
                depth += 1
            elif s[j] == ")":
                depth -= 1
                if depth == 0:
                    inner = s[i + 1 : j]
                    rest = s[j + 1 :]
                    if not rest.startswith(":"):
                        raise ConfigError(f"bad truncation spec {spec!r}: expected ':c' after ')'")
                    return PotentialDistribution.truncated(parse_mu(inner), float(rest[1:]))
        raise ConfigError(f"unbalanced parentheses in {spec!r}")
    if ":" not in s:
        raise ConfigError(f"bad potential spec {spec!r}")
    head, args = s.split(":", 1)
    vals = [float(x) for x in args.split(",")] if args else []
    try:
        if head == POINTMASS:
            return PotentialDistribution.point_mass(*vals)
        if head == BERNOULLI:
            return PotentialDistribution.bernoulli(*vals)
        if head == EXPONENTIAL:
            return PotentialDistribution.exponential(*vals)
        if head == PARETO:
            return PotentialDistribution.pareto(*vals)
    except TypeError as e:
        raise ConfigError(f"wrong number of arguments in {spec!r}") from e
    raise ConfigError(f"unknown potential kind {head!r} in {spec!r}")


def format_mu(mu: PotentialDistribution) -> str:
    k = mu.kind
    if k == TRUNCATED:
        return f"{TRUNCATED}({format_mu(mu.base)}):{mu.cutoff:g}"
    return f"{k}:{','.join(f'{p:g}' for p in mu.params)}"
