"""Simple-random-walk engine: plain and tilted stepping, hitting and exit
times, sigma times, escape probability q_d, and the hitting-probability
estimators that calibrate the coarse-graining bounds.

The drift direction is fixed to the first axis; under tilt theta each of the
2d unit steps e is drawn with probability proportional to exp(theta * e_1),
with normalization 2 d m(theta), m(theta) = (cosh theta + d - 1)/d, and every
estimate carries the log importance weight -theta * x_1(T) + T log m(theta)
that makes reweighted averages unbiased for the untilted walk.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import _kernels as K
from ._rng import TAG_DISTINCT, TAG_HIT, TAG_QD_MC, TAG_VISITS
from .errors import ConfigError

DEFAULT_STEP_CAP_FACTOR = 10_000  # cap = factor * n^2 * d
BATCH = 1 << 16


@dataclass(frozen=True)
class Tube:
    """Open censoring region x_1 > -back, |x_j| < half_width (j >= 2)."""

    back: float = math.inf
    half_width: float = math.inf


@dataclass(frozen=True)
class WalkConfig:
    d: int
    theta: float = 0.0
    step_cap: int | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.d}")

    def cap_for(self, n: int) -> int:
        if self.step_cap is not None:
            return self.step_cap
        return DEFAULT_STEP_CAP_FACTOR * n * n * self.d


@dataclass
class TrajectorySummary:
    """One recorded walk realization.

    local_times counts the site occupied at each of the times 0..steps-1,
    so its values sum to `steps`; the endpoint (time `steps`) is not charged.
    """

    endpoint: tuple[int, ...]
    steps: int
    local_times: dict[tuple[int, ...], int]
    hit_plane: bool
    plane: int
    sigma_indices: list[int]
    exit_flag: str  # "none" | "tube" | "cap"
    log_weight: float
    path: np.ndarray | None = None


@dataclass(frozen=True)
class LatticeConstants:
    d: int
    qd: float
    green_at_origin: float
    method: str
    stderr: float = 0.0


# ---------------------------------------------------------------------------
# stepping


def run_to_hyperplane(
    cfg: WalkConfig,
    n: int,
    stream: tuple[int, int, int, int] = (0, 0, 0, 0),
    tube: Tube | None = None,
    eps0_l: float | None = None,
    record_path: bool = False,
) -> TrajectorySummary:
    """Walk until x_1 >= n, tube exit, or the step cap.

    `stream` is the (masterSeed, tag, envIndex, replicaIndex) tuple of the
    derivation tree; the trajectory is the exact one replica replicaIndex of
    the bulk kernels would produce.
    """
    if n < 1:
        raise ConfigError(f"plane distance must be >= 1, got {n}")
    tube = tube or Tube()
    cap = cfg.cap_for(n)
    p_plus, p_cum2, inv_pt, log_m = K.step_probs(cfg.d, cfg.theta)
    path, code = K.record_trajectory(
        cfg.d, cfg.theta, p_plus, p_cum2, inv_pt,
        np.int64(n), float(tube.back), float(tube.half_width), np.int64(cap),
        np.int64(stream[0]), np.int64(stream[1]), np.int64(stream[2]), np.int64(stream[3]),
    )
    steps = path.shape[0] - 1
    local: dict[tuple[int, ...], int] = {}
    for k in range(steps):
        site = tuple(int(c) for c in path[k])
        local[site] = local.get(site, 0) + 1
    exit_flag = {K.EXIT_OK: "none", K.EXIT_TUBE: "tube", K.EXIT_CAP: "cap"}[int(code)]
    hit = code == K.EXIT_OK
    log_w = -cfg.theta * float(path[-1, 0]) + steps * log_m
    sig = sigma_times(path, eps0_l) if eps0_l is not None else []
    return TrajectorySummary(
        endpoint=tuple(int(c) for c in path[-1]),
        steps=steps,
        local_times=local,
        hit_plane=hit,
        plane=n,
        sigma_indices=sig,
        exit_flag=exit_flag,
        log_weight=log_w,
        path=path if record_path else None,
    )


def sigma_times(path: np.ndarray, eps0_l: float) -> list[int]:
    """Recursive exit times of Euclidean balls of radius eps0_l around the
    previous sigma point; sigma_0 = 0 is not included in the returned list."""
    if eps0_l < 1.0:
        raise ConfigError(f"sigma radius must be >= 1 lattice unit, got {eps0_l}")
    r2 = float(eps0_l) ** 2
    out = []
    center = path[0]
    for k in range(1, path.shape[0]):
        diff = path[k] - center
        if float(diff @ diff) >= r2:
            out.append(k)
            center = path[k]
    return out


# ---------------------------------------------------------------------------
# lattice constants


def _green_quadrature(d: int, tol: float) -> float:
    # G(0) = (2pi)^-d Int_[-pi,pi]^d dk / (1 - (1/d) sum cos k_j), evaluated
    # through the exact Laplace-Bessel form Int_0^inf [e^-s I_0(s/d)]^d ds;
    # the algebraic s^{-d/2} tail is integrated in closed form from S with a
    # three-term asymptotic series.
    S = 20_000.0

    def f(s):
        return special.i0e(s / d) ** d

    head, _ = integrate.quad(f, 0.0, S, epsabs=tol * 0.1, epsrel=1e-13, limit=400)
    c0 = (d / (2 * math.pi)) ** (d / 2)
    c1 = d * d / 8.0
    c2 = d**3 * (d + 8) / 128.0
    tail = c0 * (
        S ** (1 - d / 2) / (d / 2 - 1)
        + c1 * S ** (-d / 2) / (d / 2)
        + c2 * S ** (-1 - d / 2) / (d / 2 + 1)
    )
    return head + tail


def exact_return_weight(d: int, k: int) -> float:
    """Exact P[X_k = 0] for the d-dim SRW.

    Counts closed k-step paths through the dimension recursion
    A_d(k) = sum_j C(k, j) C(j, j/2) A_{d-1}(k - j) in log space; used to
    validate the CLT tail series the Monte Carlo estimator relies on.
    """
    if k % 2 == 1:
        return 0.0
    if k == 0:
        return 1.0
    return math.exp(_closed_paths_log(d, k) - k * math.log(2 * d))


def _closed_paths_log(d: int, k: int) -> float:
    j = np.arange(0, k + 1, 2)
    log_w1 = special.gammaln(j + 1) - 2.0 * special.gammaln(j / 2 + 1)
    cur = {int(jj): float(lw) for jj, lw in zip(j, log_w1)}
    for _dim in range(2, d + 1):
        nxt: dict[int, float] = {}
        for total in range(0, k + 1, 2):
            terms = []
            for jj in range(0, total + 1, 2):
                if (total - jj) in cur:
                    lw1 = special.gammaln(jj + 1) - 2.0 * special.gammaln(jj / 2 + 1)
                    lbin = special.gammaln(total + 1) - special.gammaln(jj + 1) \
                        - special.gammaln(total - jj + 1)
                    terms.append(lbin + lw1 + cur[total - jj])
            nxt[total] = float(special.logsumexp(np.array(terms)))
        cur = nxt
    return cur[k]


def clt_return_weight(d: int, k: np.ndarray) -> np.ndarray:
    """Two-term local-CLT approximation of P[X_k = 0], even k."""
    k = np.asarray(k, dtype=float)
    return 2.0 * (d / (2 * math.pi * k)) ** (d / 2) * (1.0 - d / (4.0 * k))


def _return_tail(d: int, nsteps: int) -> float:
    """sum_{k > nsteps} P[X_k = 0] via the two-term CLT series (the residual
    is O(nsteps^{-d/2-3/2}), far below every tolerance in the package)."""
    ks = np.arange(nsteps + 2, 10_000_000, 2, dtype=float)
    s = float(np.sum(clt_return_weight(d, ks)))
    # integral remainder beyond the summed horizon
    K1 = ks[-1] + 2
    c = 2.0 * (d / (2 * math.pi)) ** (d / 2)
    s += c * (K1 ** (1 - d / 2) / (d / 2 - 1)) / 2.0
    return s


_DEFAULT_CACHE = "qd.cache"
_CACHE_VERSION = 1


def _cache_path() -> Path:
    return Path(os.environ.get("RWPOT_QD_CACHE", _DEFAULT_CACHE))


def _cache_load() -> dict:
    p = _cache_path()
    if p.exists():
        try:
            data = json.loads(p.read_text())
            if data.get("version") == _CACHE_VERSION:
                return data["entries"]
        except (json.JSONDecodeError, KeyError):
            pass
    return {}


def _cache_store(entries: dict) -> None:
    p = _cache_path()
    tmp = p.with_suffix(".tmp")
    tmp.write_text(json.dumps({"version": _CACHE_VERSION, "entries": entries}, sort_keys=True))
    tmp.replace(p)


def return_probability(
    d: int,
    method: str = "quadrature",
    tol: float = 1e-10,
    mc_replicas: int = 400_000,
    mc_steps: int = 3000,
    master_seed: int = 0,
    use_cache: bool = True,
) -> LatticeConstants:
    """Escape probability q_d = 1/G(0) of the SRW, d >= 3.

    quadrature: the Fourier integral for G(0), absolute error far below 1e-6.
    montecarlo: G(0) = E[#visits to 0 in mc_steps steps] + analytic tail of
    the return weights beyond the horizon (unbiased up to a controlled
    O(mc_steps^-3) series residual), q = 1/G with delta-method stderr.
    """
    if d < 3:
        raise ConfigError(f"escape probability needs d >= 3 (recurrence below), got {d}")
    if method == "quadrature":
        key = f"{d}|quadrature|{tol:g}"
        if use_cache:
            entries = _cache_load()
            if key in entries:
                g = entries[key]
                return LatticeConstants(d, 1.0 / g, g, "quadrature")
        g = _green_quadrature(d, tol)
        if use_cache:
            entries = _cache_load()
            entries[key] = g
            _cache_store(entries)
        return LatticeConstants(d, 1.0 / g, g, "quadrature")
    if method != "montecarlo":
        raise ConfigError(f"unknown method {method!r}")
    tot = 0.0
    tot2 = 0.0
    nrep = int(mc_replicas)
    for rep0 in range(0, nrep, BATCH):
        nb = min(BATCH, nrep - rep0)
        v = K.origin_visits(np.int64(d), np.int64(mc_steps), np.int64(master_seed),
                            np.int64(TAG_QD_MC), np.int64(rep0), np.int64(nb))
        tot += float(np.sum(v))
        tot2 += float(np.sum(v.astype(np.float64) ** 2))
    mean_v = tot / nrep
    var_v = max(0.0, tot2 / nrep - mean_v**2)
    g = mean_v + _return_tail(d, mc_steps)
    se_g = math.sqrt(var_v / nrep)
    q = 1.0 / g
    return LatticeConstants(d, q, g, "montecarlo", stderr=se_g * q * q)


def qd(d: int) -> float:
    return return_probability(d).qd


# ---------------------------------------------------------------------------
# hitting estimators


def hit_before_exit(
    x, r: float, cfg: WalkConfig, replicas: int, master_seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo P_0[T_x < tau_r] with its standard error."""
    x = np.asarray(x, dtype=np.int64)
    norm = math.sqrt(float(x @ x))
    if not (0 < norm < r):
        raise ConfigError(f"need 0 < |x| < r, got |x|={norm}, r={r}")
    hits = 0
    nrep = int(replicas)
    for rep0 in range(0, nrep, BATCH):
        nb = min(BATCH, nrep - rep0)
        h = K.hit_before_exit(np.int64(cfg.d), x, float(r) ** 2, np.int64(master_seed),
                              np.int64(TAG_HIT), np.int64(rep0), np.int64(nb))
        hits += int(np.sum(h))
    p = hits / nrep
    se = math.sqrt(max(p * (1 - p), 1e-300) / nrep)
    return p, se


@dataclass
class VisitHistogram:
    counts: dict[int, int]
    conditioned: int
    replicas: int
    insufficient: bool
    cond_mean: float = dc_field(default=math.nan)
    cond_mean_stderr: float = dc_field(default=math.nan)

    def tail_prob(self, r: int) -> float:
        """Empirical P[N >= r | N >= 1]."""
        if self.conditioned == 0:
            return math.nan
        return sum(c for k, c in self.counts.items() if k >= r) / self.conditioned


def visit_histogram(
    x, r: float, cfg: WalkConfig, replicas: int, master_seed: int = 0,
    min_conditioned: int = 100,
) -> VisitHistogram:
    """Histogram of the number of visits to x before tau_r, conditioned on at
    least one visit; walks start at the origin and unconditioned replicas are
    discarded, so near-degenerate placements of x surface as an
    `insufficient` flag rather than an error."""
    x = np.asarray(x, dtype=np.int64)
    counts: dict[int, int] = {}
    nrep = int(replicas)
    tot = 0
    tot2 = 0
    ncond = 0
    for rep0 in range(0, nrep, BATCH):
        nb = min(BATCH, nrep - rep0)
        n = K.visit_count(np.int64(cfg.d), x, float(r) ** 2, np.int64(master_seed),
                          np.int64(TAG_VISITS), np.int64(rep0), np.int64(nb))
        n = n[n > 0]
        ncond += n.size
        tot += int(np.sum(n))
        tot2 += int(np.sum(n**2))
        for k, c in zip(*np.unique(n, return_counts=True)):
            counts[int(k)] = counts.get(int(k), 0) + int(c)
    hist = VisitHistogram(counts, ncond, nrep, ncond < min_conditioned)
    if ncond > 1:
        m = tot / ncond
        var = max(0.0, tot2 / ncond - m * m)
        hist.cond_mean = m
        hist.cond_mean_stderr = math.sqrt(var / ncond)
    return hist


def sum_hit_probabilities(
    r: float, cfg: WalkConfig, replicas: int, master_seed: int = 0
) -> tuple[float, float]:
    """sum_{0<|x|<r} P_0[T_x < tau_r], estimated as the expected number of
    distinct sites occupied before tau_r (start site included)."""
    if r < 10:
        raise ConfigError(f"radius must be >= 10, got {r}")
    tot = 0.0
    tot2 = 0.0
    nrep = int(replicas)
    for rep0 in range(0, nrep, BATCH):
        nb = min(BATCH, nrep - rep0)
        nd, _tau = K.distinct_sites(np.int64(cfg.d), float(r) ** 2, np.int64(master_seed),
                                    np.int64(TAG_DISTINCT), np.int64(rep0), np.int64(nb))
        tot += float(np.sum(nd))
        tot2 += float(np.sum(nd.astype(np.float64) ** 2))
    m = tot / nrep
    var = max(0.0, tot2 / nrep - m * m)
    return m, math.sqrt(var / nrep)


# ---------------------------------------------------------------------------
# d = 1 exhaustive importance-sampling check helpers


def tilted_path_log_prob(cfg: WalkConfig, steps: np.ndarray) -> float:
    """Exact log-probability of a +-1/transverse step sequence under the
    tilted walk; used by the exhaustive d=1 change-of-measure tests."""
    _, _, _, log_m = K.step_probs(cfg.d, cfg.theta)
    dx1 = int(np.sum(steps == 0) - np.sum(steps == 1))
    t = len(steps)
    return cfg.theta * dx1 - t * (math.log(2 * cfg.d) + log_m)
