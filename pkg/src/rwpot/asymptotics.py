"""Closed-form predictions: the saturation function f, the per-site cost
integral I_lambda, the truncated variant and the scale L_lambda it sets, the
predicted exponent sqrt(2 d I_lambda), the finite-mean asymptote, and the
constant-potential exponent used as an exact oracle throughout the tests.

f(z) = q_d (1 - e^-z) / (1 - (1-q_d) e^-z) is the expected cost of one
visited site of rescaled value z once geometric revisits are accounted for;
it increases from f(z) ~ z at 0 to the saturation value q_d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from . import potential as pot
from .errors import ConfigError, DegenerateScaleError
from .walk import return_probability

REGIME_MASS_ABOVE = "MassAboveCutoff"
REGIME_MASS_BELOW = "MassBelowCutoff"

_I_REL_TOL = 1e-9


@dataclass(frozen=True)
class AsymptoticReport:
    d: int
    lam: float
    eps: float
    qd: float
    i_lambda: float
    i_eps_lambda: float
    l_lambda: float
    predicted_alpha: float
    regime: str

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "lambda": self.lam,
            "eps": self.eps,
            "qd": self.qd,
            "I_lambda": self.i_lambda,
            "I_eps_lambda": self.i_eps_lambda,
            "L_lambda": self.l_lambda,
            "predicted_alpha": self.predicted_alpha,
            "regime": self.regime,
        }


def f_eval(z: float, qd: float) -> float:
    if z < 0:
        raise ConfigError(f"f is defined on z >= 0, got {z}")
    if not (0.0 < qd < 1.0):
        raise ConfigError(f"escape probability must lie in (0,1), got {qd}")
    # expm1 and the rearranged denominator keep f(z) ~ z exact for tiny z
    em = -math.expm1(-z)  # 1 - e^-z
    return qd * em / (qd + (1.0 - qd) * em)


def i_integral(mu: pot.PotentialDistribution, lam: float, qd: float) -> float:
    """I = Int f(lam z) dmu(z): exact sum over atoms plus adaptive
    quadrature of the continuous part, relative error <= 1e-8.

    Beyond z = 50/lam the factor f(lam z) equals q_d to within 1e-20
    relative, so that tail is taken in closed form as q_d times the tail
    mass; the quadrature below it gets breakpoints at both the density scale
    and the f transition scale 1/lam, which keeps tiny lam (narrow densities
    on huge intervals) exact.
    """
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    atoms, cont = pot.decompose(mu)
    total = sum(w * f_eval(lam * x, qd) for x, w in atoms)
    if cont is None:
        return total
    dens, lo, hi, scale = cont
    z_sat = 50.0 / lam
    z_top = min(hi, z_sat)
    if z_top > lo:
        def g(z):
            return f_eval(lam * z, qd) * dens(z)

        pts = sorted(
            {
                p
                for base in (scale, 1.0 / lam)
                for k in (-3, -2, -1, 0, 1, 2, 3)
                for p in (lo + base * 10.0**k,)
                if lo < p < z_top
            }
        )
        total += integrate.quad(
            g, lo, z_top, points=pts or None, epsabs=1e-300, epsrel=_I_REL_TOL, limit=500
        )[0]
    if math.isinf(hi) or hi > z_sat:
        zcut = max(lo, z_sat)
        cont_tail = pot.interval_mass(mu, zcut, math.inf) - sum(
            w for x, w in atoms if x >= zcut
        )
        total += qd * max(0.0, cont_tail)
    return total


def scale_from_i(i_eps_lambda: float) -> float:
    """L = (2 I_eps_lambda)^{-1/2}, the box scale at which important points
    become visible."""
    if i_eps_lambda <= 0:
        raise DegenerateScaleError("I_{eps,lambda} = 0: no cost, scale undefined")
    return 1.0 / math.sqrt(2.0 * i_eps_lambda)


def report(
    mu: pot.PotentialDistribution, eps: float, lam: float, d: int, qd: float | None = None
) -> AsymptoticReport:
    if not (0.0 < eps < 1.0):
        raise ConfigError(f"eps must lie in (0,1), got {eps}")
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    if d < 3:
        raise ConfigError(f"the asymptotic theory needs d >= 3, got {d}")
    if qd is None:
        qd = return_probability(d).qd
    i_lam = i_integral(mu, lam, qd)
    mu_eps = pot.truncate(mu, eps, lam)
    i_eps = i_integral(mu_eps, lam, qd)
    l_lam = scale_from_i(i_eps)
    tail_p = pot.survival(mu, eps / lam)
    above = (1.0 / l_lam) <= (eps**-2) * math.sqrt(tail_p)
    return AsymptoticReport(
        d=d,
        lam=lam,
        eps=eps,
        qd=qd,
        i_lambda=i_lam,
        i_eps_lambda=i_eps,
        l_lambda=l_lam,
        predicted_alpha=math.sqrt(2.0 * d * i_lam),
        regime=REGIME_MASS_ABOVE if above else REGIME_MASS_BELOW,
    )


def integrable_asymptote(mu: pot.PotentialDistribution, lam: float, d: int) -> float:
    """sqrt(2 d lam E[V]), the finite-mean small-lambda exponent."""
    m = pot.mean(mu)
    if not math.isfinite(m):
        raise ConfigError(f"{mu} has infinite mean; no integrable asymptote")
    return math.sqrt(2.0 * d * lam * m)


def constant_potential_alpha(d: int, beta: float) -> float:
    """Exact passage exponent for the constant per-step cost beta:
    the positive root of (cosh a + d - 1)/d = e^beta."""
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    return math.acosh(d * math.exp(beta) - (d - 1.0))


def block_cost(length: float, i_val: float, d: int) -> float:
    """Per-unit-distance cost of crossing blocks of side `length`:
    drift cost L sqrt(d) I plus clock cost sqrt(d)/(2L); minimized at
    L = (2I)^{-1/2} where it equals sqrt(2 d I)."""
    if length <= 0 or i_val <= 0:
        raise ConfigError("block cost needs positive scale and positive integral")
    return length * math.sqrt(d) * i_val + math.sqrt(d) / (2.0 * length)


def default_tilt(d: int, mu: pot.PotentialDistribution, lam: float, qd: float | None = None) -> float:
    """Zero-variance tilt for a constant potential and the discrete analogue
    of the drifted change of measure in general: arccosh(d e^beta - (d-1))
    with beta the predicted per-step cost (I_lambda for d >= 3, the one-site
    cost -log laplace(mu, lam) below that)."""
    if d >= 3:
        if qd is None:
            qd = return_probability(d).qd
        beta = i_integral(mu, lam, qd)
    else:
        beta = -math.log(pot.laplace(mu, lam))
    if beta <= 0:
        return 0.0
    return constant_potential_alpha(d, beta)
