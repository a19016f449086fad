"""The i.i.d. environment as a pure function of (seed, site).

No array of values is ever materialized: walks explore an a-priori unbounded
region, so each site's value is recomputed on demand from a counter-based
hash of the seed and the coordinates.  The hash consumes the 64-bit
little-endian words ``seed, x_1, ..., x_d`` in order (see ``_rng`` for the
frozen byte layout), yielding a uniform in [0, 1) that feeds the law's
inverse CDF.  Identical (seed, site) pairs therefore give bit-identical
values on any platform and under any worker count.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import potential as pot
from ._rng import hash_words, hash_words_array, units_from_hashes, word_to_unit
from .errors import ConfigError, ResourceCapError

BOX_VOLUME_CAP = 100_000_000


@dataclass(frozen=True)
class EnvironmentField:
    seed: int
    mu: pot.PotentialDistribution
    d: int
    overrides: dict[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.d}")

    def value_at(self, site) -> float:
        """Potential value at a lattice site (pure, stateless)."""
        site = tuple(int(c) for c in site)
        if len(site) != self.d:
            raise ConfigError(f"site {site} has wrong dimension, expected {self.d}")
        if self.overrides and site in self.overrides:
            return self.overrides[site]
        u = word_to_unit(hash_words(self.seed, *site))
        return pot.sample(self.mu, u)

    def values_in_box(self, box) -> tuple[np.ndarray, np.ndarray]:
        """(sites, values) for every site of an axis-aligned box, in
        lexicographic site order.  box = sequence of (lo, hi) inclusive."""
        box = [(int(lo), int(hi)) for lo, hi in box]
        if len(box) != self.d:
            raise ConfigError(f"box has wrong dimension, expected {self.d}")
        vol = 1
        for lo, hi in box:
            if hi < lo:
                return np.empty((0, self.d), np.int64), np.empty(0)
            vol *= hi - lo + 1
            if vol > BOX_VOLUME_CAP:
                raise ResourceCapError(f"box volume exceeds cap {BOX_VOLUME_CAP}")
        axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in box]
        grids = np.meshgrid(*axes, indexing="ij")
        sites = np.stack([g.ravel() for g in grids], axis=1)
        vals = self.values_for_sites(sites)
        return sites, vals

    def values_for_sites(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        h = hash_words_array(self.seed, [sites[:, j] for j in range(self.d)])
        vals = pot.sample_array(self.mu, units_from_hashes(h))
        if self.overrides:
            for s, v in self.overrides.items():
                mask = np.all(sites == np.asarray(s, dtype=np.int64), axis=1)
                vals[mask] = v
        return vals

    def with_overrides(self, overrides: dict[tuple[int, ...], float]) -> "EnvironmentField":
        """Copy of the field with hand-planted site values (testing instrument;
        kernels only honor overrides passed through the python paths)."""
        merged = dict(self.overrides)
        merged.update({tuple(int(c) for c in k): float(v) for k, v in overrides.items()})
        return EnvironmentField(self.seed, self.mu, self.d, merged)


def important_sites(
    env: EnvironmentField, box, eps: float, lam: float, volume_cap: int = BOX_VOLUME_CAP
) -> list[tuple[int, ...]]:
    """Sites x in the box with V(x) >= eps/lam, in lexicographic order."""
    if not (eps > 0 and lam > 0):
        raise ConfigError("important_sites needs eps > 0 and lambda > 0")
    box = [(int(lo), int(hi)) for lo, hi in box]
    vol = 1
    for lo, hi in box:
        vol *= max(0, hi - lo + 1)
    if vol > volume_cap:
        raise ResourceCapError(f"box volume {vol} exceeds cap {volume_cap}")
    threshold = eps / lam
    out = []
    chunk = []
    # lexicographic iteration in chunks keeps memory flat on large boxes
    for site in itertools.product(*[range(lo, hi + 1) for lo, hi in box]):
        chunk.append(site)
        if len(chunk) == 65536:
            out.extend(_filter_chunk(env, chunk, threshold))
            chunk = []
    if chunk:
        out.extend(_filter_chunk(env, chunk, threshold))
    return out


def _filter_chunk(env, chunk, threshold):
    arr = np.asarray(chunk, dtype=np.int64)
    vals = env.values_for_sites(arr)
    return [tuple(int(c) for c in arr[i]) for i in np.nonzero(vals >= threshold)[0]]
