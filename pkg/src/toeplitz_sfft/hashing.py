"""Frequency hashing with an integer stretch and the time-domain bin primitive.

Bucket ``j`` of a hash ``(sigma, b, B)`` passes frequencies with
``sigma (f - b) ~ j / B (mod 1)``. Its output at integer time ``tau`` is

    z_j(tau) = sum_m G(m) exp(2 pi i m (j/B + sigma b)) W(tau - m sigma),

with ``W = x * H`` and reads of x outside its domain returning 0. Splitting
``m = r + iB`` folds the sum into B residues and one length-B FFT gives
all buckets at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .filters import FilterG, build_filter_g, eval_g_time, eval_h

B_QUANT = 2.0**-53


class HashError(ValueError):
    pass


@dataclass(frozen=True)
class HashParams:
    sigma: int
    b: float
    B: int

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise HashError("sigma must be a positive integer")
        if not 0 <= self.b <= 1:
            raise HashError("b must lie in [0, 1]")
        object.__setattr__(self, "sigma", int(self.sigma))

    @property
    def phase(self):
        """sigma * b reduced mod 1."""
        return (self.sigma * self.b) % 1.0

    def to_json(self):
        return {"sigma": self.sigma, "b": self.b, "B": self.B}


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def hash_freq(p, f):
    pos = np.mod(p.sigma * (np.asarray(f, dtype=float) - p.b), 1.0)
    out = np.mod(round_half_up(p.B * pos), p.B)
    return int(out) if out.ndim == 0 else out


def sigma_range(B, k, Delta):
    lo = 1.0 / (200 * B * k * Delta)
    if lo < 2:
        raise HashError(
            f"1/(200 B k Delta) = {lo:.3g} < 2: instance too small to hash; use larger d or smaller B")
    return int(ceil(lo)), int(floor(1.0 / (100 * B * k * Delta)))


def _quantized_b(upper, rng):
    b = rng.random() * upper
    return float(np.floor(b / B_QUANT) * B_QUANT)


def sample_hash_params(B, k, Delta, rng):
    lo, hi = sigma_range(B, k, Delta)
    sigma = int(rng.integers(lo, hi + 1))
    return HashParams(sigma, _quantized_b(1.0 / sigma, rng), int(B))


def sample_hash_params_range(B, sigma_lo, sigma_hi, rng):
    """Same draw with an explicit stretch range."""
    sigma = int(rng.integers(sigma_lo, sigma_hi + 1))
    return HashParams(sigma, _quantized_b(1.0 / sigma, rng), int(B))


class BinAccessor:
    """All B bucket outputs of a hash at arbitrary integer times.

    ``source(t)`` returns the signal at an int array of times (zero off the
    domain). When ``H`` is given the source is windowed by it first.
    Results are memoised per time.
    """

    def __init__(self, source, G: FilterG, params: HashParams, H=None, cache=True):
        if G.B != params.B:
            raise HashError("filter and hash disagree on B")
        self.source = source
        self.G = G
        self.p = params
        self.H = H
        T = G.time_support
        self.T = T
        # residue layout: m = r + i B for r in [B], i in [-D, D]
        D = int(ceil(T / G.B)) + 1
        m = np.arange(-D * G.B, (D + 1) * G.B)
        keep = np.abs(m) <= T
        coef = np.where(keep, eval_g_time(G, m), 0.0) * np.exp(2j * np.pi * ((m * params.phase) % 1.0))
        self._m = m[keep]
        self._coef = coef[keep]
        self._fold = np.zeros((self._m.size, G.B))
        self._fold[np.arange(self._m.size), np.mod(self._m, G.B)] = 1.0
        self._cache = {} if cache else None
        self.calls = 0

    def _windowed(self, t):
        x = self.source(t)
        if self.H is not None:
            x = x * eval_h(self.H, t)
        return x

    def _compute(self, taus):
        taus = np.asarray(taus, dtype=np.int64)
        B = self.p.B
        out = np.empty((taus.size, B), dtype=complex)
        step = max(1, 2**20 // max(1, self._m.size))
        for s in range(0, taus.size, step):
            tt = taus[s:s + step]
            pts = tt[:, None] - self._m[None, :] * self.p.sigma
            W = self._windowed(pts.ravel()).reshape(pts.shape)
            v = (W * self._coef[None, :]) @ self._fold
            out[s:s + step] = B * np.fft.ifft(v, axis=1)
        self.calls += taus.size
        return out

    def at_many(self, taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=np.int64))
        if self._cache is None:
            return self._compute(taus)
        cache = self._cache
        need = np.unique([t for t in taus.tolist() if t not in cache])
        if need.size:
            for t, row in zip(need.tolist(), self._compute(need)):
                cache[t] = row
        return np.array([cache[t] for t in taus.tolist()]).reshape(taus.size, self.p.B)

    def at(self, tau):
        return self.at_many(np.array([tau]))[0]

    def sample_points(self, alpha):
        """Signal times read by one hash_to_bins call at alpha."""
        return self.p.sigma * alpha - self._m * self.p.sigma


def hash_to_bins(x, H, G, p, alpha):
    """Length-B vector u[j] = ((x H) * g_j)(sigma alpha).

    ``x`` is a SignalOracle (or any callable on int arrays returning zero
    outside the domain).
    """
    src = x.read if hasattr(x, "read") else x
    return BinAccessor(src, G, p, H=H, cache=False).at(p.sigma * int(alpha))


class BoundedInstance:
    """One bucket of the unit-stretch split, readable at any integer time."""

    def __init__(self, acc: BinAccessor, j: int, interval):
        self.acc = acc
        self.j = int(j)
        self.interval = interval

    def read(self, t):
        t = np.asarray(t, dtype=np.int64)
        return self.acc.at_many(t.ravel())[:, self.j].reshape(t.shape)

    def __call__(self, t):
        return self.read(t)

    def contains(self, f):
        lo, hi = self.interval
        return (np.asarray(f) - lo) % 1.0 <= (hi - lo) % 1.0


def outer_interval(b, B, j):
    """Arc of frequencies hashed to bucket j by the unit stretch with offset b."""
    lo = (b + (2 * j - 1) / (2 * B)) % 1.0
    hi = (b + (2 * j + 1) / (2 * B)) % 1.0
    return lo, hi


def outer_split(x, B, rng, H=None, G=None, w=0.5, delta=1e-3, k=1, b=None):
    """Split x into B bounded instances via a unit-stretch hash with random offset.

    Returns (list of BoundedInstance, HashParams). All instances share one
    memoised accessor so a time is filtered once for every bucket.
    """
    G = G or build_filter_g(B, w, delta, k)
    b = _quantized_b(1.0, rng) if b is None else float(b) % 1.0
    p = HashParams(1, b, int(B))
    src = x.read if hasattr(x, "read") else x
    acc = BinAccessor(src, G, p, H=H)
    return [BoundedInstance(acc, j, outer_interval(p.b, B, j)) for j in range(B)], p
