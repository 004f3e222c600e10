"""End-to-end low-rank Toeplitz recovery from entry queries.

1. read a random half-column chunk, whose samples are a sparse sum of tones;
2. recover candidate frequencies from the chunk;
3. expand every candidate onto nearby half-integer grid anchors and offsets;
4. fit tied diagonal weights by a two-sided leverage-sampled regression;
5. fall back to the zero matrix when it has the smaller sampled cost.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields
from math import log

import numpy as np

from .core import FourierToeplitz, SignalOracle, canonical_freq, conjugate_freq, spawn, wrap_dist
from .regression import C_S, C_TAU, ConjugatePairing, sample_count, solve_matrix_regression
from .sfft import FrequencyList, RecoveryConfig, sparse_recover

DEDUP_TOL = 1e-15
# default offset step is 1/(4d): anchors +- 2 steps land on the integer grid
GAMMA_DIV = 4


def asymptotic_gamma(d, delta, C=1.0):
    """delta / 2^(C log^7 d), floored at 2^-40 / d so it stays representable."""
    expo = C * log(d) ** 7
    val = delta * 2.0 ** (-expo) if expo < 1000 else 0.0
    return max(val, 2.0**-40 / d)


@dataclass(frozen=True)
class GridSpec:
    d: int
    r2: int = 2
    gamma: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            object.__setattr__(self, "gamma", 1.0 / (GAMMA_DIV * self.d))
        if self.r2 < 1:
            raise ValueError("r2 must be >= 1")

    @property
    def anchors(self):
        return (2 * np.arange(self.d) + 1) / (2 * self.d)

    def anchors_near(self, f, radius):
        """Anchors within wrap distance radius of f."""
        d = self.d
        # anchor index i sits at (i + 1/2)/d
        lo = int(np.floor((f - radius) * d - 0.5)) - 1
        hi = int(np.ceil((f + radius) * d - 0.5)) + 1
        idx = np.arange(lo, hi + 1)
        a = ((2 * np.mod(idx, d) + 1) / (2 * d))
        return np.unique(a[wrap_dist(a, f) <= radius + 1e-15])


def expand_grid(L, g, window=None, max_radius=None, radius_scale=1.0):
    """Offsets f +- gamma j (1 <= j <= r2) around every anchor near a recovered frequency.

    ``L`` is a FrequencyList or an array of frequencies. With ``window`` unset
    each entry uses its own confidence radius. The result is conjugate closed,
    sorted and deduplicated.
    """
    if isinstance(L, FrequencyList):
        ok = np.array([fl in ("", "degraded") for fl in L.flags], dtype=bool)
        freqs = L.freqs[ok] if ok.size else np.zeros(0)
        radii = L.radii[ok] if ok.size else np.zeros(0)
        if window is not None:
            if window < L.window:
                raise ValueError("window must be at least the list's window")
            radii = np.full(freqs.size, window)
    else:
        freqs = np.atleast_1d(np.asarray(L, dtype=float))
        if window is None:
            raise ValueError("window required for a bare frequency array")
        radii = np.full(freqs.size, window)
    radii = radii * radius_scale
    if max_radius is not None:
        radii = np.minimum(radii, max_radius)
    out = []
    offs = g.gamma * np.arange(1, g.r2 + 1)
    for f, rad in zip(freqs, radii):
        for a in g.anchors_near(f, rad):
            out.append(a + offs)
            out.append(a - offs)
    if not out:
        return np.zeros(0)
    S = canonical_freq(np.concatenate(out))
    S = np.concatenate([S, conjugate_freq(S)])
    S = np.sort(canonical_freq(S))
    keep = np.concatenate([[True], np.diff(S) > DEDUP_TOL])
    S = S[keep]
    if S.size > 1 and wrap_dist(S[0], S[-1]) <= DEDUP_TOL:
        S = S[:-1]
    return S


def heavy_column_sample(oracle, d, rng):
    """Random index i in [d/2] and access to the chunk t -> B[i + t, i], t in [d/2]."""
    if d < 4 or d % 2:
        raise ValueError("d must be even and >= 4")
    i = int(rng.integers(0, d // 2))
    return i, SignalOracle(lambda t: oracle.read_many(i + t, np.full_like(t, i)), d // 2)


@dataclass
class LowRankConfig:
    r2: int = 2
    gamma: object = "auto"        # "auto" -> 1/(4d), "asymptotic", or a float
    C_s: float = C_S
    C_tau: float = C_TAU
    s: int = 0                    # 0: from C_s
    window: float = 0.0           # 0: per-frequency radii from the sparse recovery
    max_radius: float = 4.0       # per-frequency radius cap, in units of 1/d
    max_pairs: int = 4096
    # while sampled cost / zero cost exceeds widen_ratio: first rerun the sparse
    # recovery on the fit residual, then refit with doubled radii
    widen_ratio: float = 0.25
    refine_rounds: int = 2
    widen_steps: int = 2
    s_cap_frac: float = 0.5       # sample side never exceeds this fraction of d
    sfft: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj):
        names = {f.name for f in fields(cls)}
        bad = set(obj) - names
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**obj)

    def to_dict(self):
        return asdict(self)

    def gamma_value(self, d, delta):
        if self.gamma == "auto":
            return 1.0 / (GAMMA_DIV * d)
        if self.gamma == "asymptotic":
            return asymptotic_gamma(d, delta)
        return float(self.gamma)


@dataclass
class RecoveryReport:
    output: FourierToeplitz
    queries_used: int
    column: int
    list_size: int
    grid_size: int
    n_pairs: int
    sampled_cost: float
    zero_cost: float
    chose_zero: bool
    flags: list
    meta: dict = field(default_factory=dict)

    def to_json(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "output"}
        out["output"] = self.output.to_json()
        return out


def robust_lowrank(oracle, k, delta, cfg=None, rng=None):
    """Factored Toeplitz approximation of the matrix behind an EntryOracle."""
    cfg = cfg or LowRankConfig()
    if isinstance(cfg, dict):
        cfg = LowRankConfig.from_dict(cfg)
    rng = np.random.default_rng(rng)
    d = oracle.d
    t0 = time.perf_counter()
    rng_col, rng_sfft, rng_reg = spawn(rng, 3)
    flags = []

    i, chunk = heavy_column_sample(oracle, d, rng_col)
    scfg = RecoveryConfig.from_dict({"k": k, "delta": delta, **cfg.sfft})
    L = sparse_recover(chunk, scfg, rng_sfft)
    if any(fl not in ("", "degraded", "superseded") for fl in L.flags):
        flags.append("sfft_partial")
    reads_col = oracle.queries_used

    g = GridSpec(d, cfg.r2, cfg.gamma_value(d, delta))
    rng_reg, rng_ref, rng_wide = spawn(rng_reg, 3)
    best = _fit_scaled(oracle, L, g, cfg, rng_reg, 1.0)
    rounds = 0
    for rng_round in spawn(rng_ref, cfg.refine_rounds):
        if best[0] <= cfg.widen_ratio:
            break
        # sparse recovery on what the current fit leaves in the sampled column
        fitted = best[3].to_fourier(d) if best[2].n_pairs else FourierToeplitz.empty(d)
        resid = SignalOracle(lambda t, F=fitted: chunk.read(t) - F.lag_values(t).real, chunk.n)
        r_sfft, r_fit = spawn(rng_round, 2)
        L = L.merged(sparse_recover(resid, scfg, r_sfft))
        rounds += 1
        cand = _fit_scaled(oracle, L, g, cfg, r_fit, 1.0)
        if cand[0] < best[0]:
            best = cand
    # close tones recovered as one cluster midpoint need a wider search
    for step, rng_fit in enumerate(spawn(rng_wide, cfg.widen_steps), start=1):
        if best[0] <= cfg.widen_ratio:
            break
        cand = _fit_scaled(oracle, L, g, cfg, rng_fit, 2.0**step)
        if cand[0] < best[0]:
            best = cand
    _, S, M, fit, fl, scale = best
    flags += fl
    chose_zero = not fit.sampled_cost < fit.zero_cost
    out = FourierToeplitz.empty(d) if chose_zero or M.n_pairs == 0 else fit.to_fourier(d)
    if chose_zero and M.n_pairs:
        flags.append("zero_fallback")
    meta = {
        "k": k,
        "delta": delta,
        "d": d,
        "config": cfg.to_dict(),
        "gamma": g.gamma,
        "s": fit.s,
        "reads_column_stage": reads_col,
        "reads_regression_stage": oracle.queries_used - reads_col,
        "window": L.window,
        "recovered": L.good().tolist(),
        "sfft": {key: L.meta[key] for key in ("outer", "asymptotic_tolerance", "config") if key in L.meta},
        "cond": fit.info.cond,
        "radius_scale": scale,
        "refine_rounds": rounds,
        "seconds": time.perf_counter() - t0,
    }
    return RecoveryReport(out, oracle.queries_used, i, len(L), int(S.size), M.n_pairs,
                          fit.sampled_cost, fit.zero_cost, chose_zero, flags, meta)


def _fit_scaled(oracle, L, g, cfg, rng, scale):
    """(sampled cost ratio, S, M, fit, flags, scale) for one radius scale."""
    S, M, fit, fl = _fit_grid(oracle, L, g, cfg, rng, scale)
    ratio = fit.sampled_cost / fit.zero_cost if fit.zero_cost > 0 else 0.0
    return ratio, S, M, fit, fl, scale


def _fit_grid(oracle, L, g, cfg, rng, scale):
    d = g.d
    flags = []
    S = expand_grid(L, g, window=cfg.window or None, max_radius=scale * cfg.max_radius / d,
                    radius_scale=scale)
    M = ConjugatePairing.from_freqs(S) if S.size else ConjugatePairing(np.zeros(0), np.zeros(0))
    if M.n_pairs > cfg.max_pairs:
        flags.append("grid_truncated")
        keep = np.argsort(np.min(np.abs(np.subtract.outer(M.reps, L.good())), axis=1))[: cfg.max_pairs]
        M = ConjugatePairing(M.reps[np.sort(keep)], M.mult[np.sort(keep)])
    s = cfg.s or sample_count(M.n_pairs, cfg.C_s)
    s = max(1, min(s, int(cfg.s_cap_frac * d)))
    fit = solve_matrix_regression(oracle, M, rng, s=s, C_s=cfg.C_s, C_tau=cfg.C_tau)
    if fit.info.ridge:
        flags.append("ridge")
    return S, M, fit, flags


def lowrank(oracle, k, delta, cfg=None, rng=None):
    """Noise-free entry point; identical pipeline."""
    return robust_lowrank(oracle, k, delta, cfg, rng)
