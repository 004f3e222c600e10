"""Off-grid sparse Fourier recovery with integer-time sample access.

Pipeline: window the signal with H, split it into B_outer bounded instances
with a unit-stretch hash, optionally isolate tones inside an instance with a
second stretched hash, then locate each isolated tone by phase voting over
geometrically shrinking frequency windows.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from math import ceil, log

import numpy as np

from .core import SignalOracle, canonical_freq, spawn, wrap_dist
from .filters import build_filter_g, build_filter_h
from .hashing import BinAccessor, outer_split, sample_hash_params_range


FIT_FRAC = 0.25


class NoConsensus(RuntimeError):
    pass


class EmptySignal(RuntimeError):
    pass


@dataclass
class RecoveryConfig:
    k: int = 1
    delta: float = 1e-3
    d: int = 0
    B_outer: int = 0          # 0: largest power of two whose filter fits
    B_inner: int = 0          # 0: k**2 when the stretched filter fits, else no inner stage
    inner_reps: int = 2       # independent inner hashes per bounded instance
    w_outer: float = 0.5
    n_splits: int = 2         # outer splits, offsets spread evenly over one bucket
    w_inner: float = 0.5
    delta_g: float = 5e-2     # leakage of the bucketing filters
    h_s1: float = 0.0         # 0: automatic
    h_support: float = 0.25   # cap on the window's spectral support
    eta: float = 0.02         # heavy-bucket energy threshold relative to the largest
    n_probe: int = 64
    C_m: float = 2.0
    m_onegood: int = 0
    R_loc: int = 0
    R_loc_min: int = 7
    t_ary: int = 0
    s_vote: float = 1.0 / 8
    R_median: int = 0
    beta_cap_frac: float = 0.25
    C_r: float = 4.0
    max_retries: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.s_vote < 1:
            raise ValueError("s_vote must lie in (0, 1)")

    @classmethod
    def from_dict(cls, obj):
        names = {f.name for f in fields(cls)}
        bad = set(obj) - names
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**obj)

    def to_dict(self):
        return asdict(self)

    def resolved(self, n):
        """Copy with every automatic field filled in for a length-n signal."""
        c = RecoveryConfig(**asdict(self))
        c.d = n
        c.t_ary = c.t_ary or max(4, ceil(log(n)))
        if c.t_ary <= 4:
            c.t_ary = 5  # the shrink factor t/4 must exceed 1
        c.m_onegood = c.m_onegood or ceil(c.C_m * c.k * log(n))
        # ceil(log_{1/c}(t c)) with c = 1/4 is tiny at these sizes; floor it
        c.R_loc = c.R_loc or max(ceil(log(c.t_ary / 4) / log(4)), c.R_loc_min)
        c.R_median = c.R_median or 2 * c.k + 1
        if not c.h_s1:
            c.h_s1 = min(112.0, c.h_support * n / 4)
        if not c.B_inner:
            c.B_inner = c.k**2 if c.k > 1 else 1
        if not c.B_outer:
            c.B_outer = _fit_buckets(n, c.w_outer, c.delta_g, 1, lambda B: B, cap=max(4, 2 * c.k))
        return c

    @property
    def list_cap(self):
        return int(self.C_r * self.k * ceil(log(1 / self.delta)))


def _fit_buckets(n, w, delta_g, k, reach, cap):
    B = 2
    while 2 * B <= cap:
        G = build_filter_g(2 * B, w, delta_g, k)
        if reach(G.time_support) > n * FIT_FRAC:
            break
        B *= 2
    return B


@dataclass
class FrequencyList:
    freqs: np.ndarray
    radii: np.ndarray
    flags: list
    energy: np.ndarray
    window: float
    provenance: list = field(default_factory=list)
    reads: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, **kw):
        return cls(np.zeros(0), np.zeros(0), [], np.zeros(0), 0.0, **kw)

    def good(self):
        ok = np.array([fl in ("", "degraded") for fl in self.flags], dtype=bool)
        return self.freqs[ok] if ok.size else np.zeros(0)

    def __len__(self):
        return len(self.flags)

    def merged(self, other, tag="refine"):
        """Concatenation of two lists; entries of ``other`` get provenance ``tag``."""
        prov = list(self.provenance) or [None] * len(self)
        return FrequencyList(
            np.concatenate([self.freqs, other.freqs]),
            np.concatenate([self.radii, other.radii]),
            list(self.flags) + list(other.flags),
            np.concatenate([self.energy, other.energy]),
            max(self.window, other.window),
            prov + [tag] * len(other),
            self.reads + other.reads,
            self.meta,
        )

    def to_json(self):
        return {
            "freqs": self.freqs.tolist(),
            "radii": self.radii.tolist(),
            "flags": list(self.flags),
            "energy": self.energy.tolist(),
            "window": self.window,
            "provenance": list(self.provenance),
            "reads": self.reads,
            "meta": self.meta,
        }


class Cluster:
    """Integer-time access to one isolated signal, zero off [0, n)."""

    def __init__(self, read, n):
        self.read = read
        self.n = int(n)

    def __call__(self, t):
        return self.read(np.asarray(t, dtype=np.int64))


def one_good_sample(z, cfg, rng, hi=None):
    """alpha drawn from m uniform probes in [0, hi) with probability ~ |z(alpha)|^2."""
    hi = z.n if hi is None else hi
    if hi < 1:
        raise EmptySignal("no room for probes")
    m = cfg.m_onegood or ceil(cfg.C_m * cfg.k * log(max(z.n, 2)))
    probes = rng.integers(0, hi, size=m)
    e = np.abs(z(probes)) ** 2
    tot = e.sum()
    if not tot > 0:
        raise EmptySignal("signal empty at probes")
    return int(probes[rng.choice(m, p=e / tot)])


def _vote_phase(z, cfg, beta, rng):
    for _ in range(cfg.max_retries):
        alpha = one_good_sample(z, cfg, rng, hi=z.n - beta)
        v = z(np.array([alpha, alpha + beta]))
        if v[0] != 0 and v[1] != 0:
            return float(np.angle(v[1] / v[0]) / (2 * np.pi))
    raise EmptySignal("zero denominator after retries")


def locate1_inner(z, cfg, center, width, rng, return_votes=False):
    """One voting round over t cells of [center - width/2, center + width/2].

    With ``return_votes`` also returns the smoothed per-cell votes and the
    direct hit counts.
    """
    t = cfg.t_ary
    s = cfg.s_vote
    cells = center - width / 2 + (np.arange(1, t + 1) - 0.5) * width / t
    beta_hat = t * s / (2 * width)
    lo = max(1, int(ceil(beta_hat / 2)))
    hi = max(lo, int(beta_hat))
    # one virtual cell past each edge so edge cells are smoothed like interior ones
    padded = center - width / 2 + (np.arange(t + 2) - 0.5) * width / t
    votes = np.zeros(t + 2, dtype=int)
    direct = np.zeros(t + 2, dtype=int)
    miss = np.zeros(t + 2)
    for _ in range(cfg.R_loc):
        beta = int(rng.integers(lo, hi + 1))
        theta = _vote_phase(z, cfg, beta, rng)
        dist = wrap_dist(np.mod(theta - beta * padded, 1.0), 0.0)
        hit = dist <= s / 2
        direct += hit
        votes[1:-1] += hit[:-2] + hit[1:-1] + hit[2:]
        miss += dist
    votes, direct, miss = votes[1:-1], direct[1:-1], miss[1:-1]
    # most smoothed votes, then most direct hits, then smallest total phase error
    q = int(np.lexsort((miss, -direct, -votes))[0])
    if votes[q] <= cfg.R_loc / 2:
        raise NoConsensus("no consensus")
    if return_votes:
        return float(cells[q]), votes, direct
    return float(cells[q])


def _shrink(cfg):
    tp = cfg.t_ary / 4
    if tp <= 1:
        raise ValueError("t_ary must exceed 4")
    return tp


def locate1_signal(z, cfg, interval, rng):
    """Frequency estimate for a one-clustered z whose tone lies in interval (lo, hi).

    Returns (f, radius, degraded).
    """
    lo, hi = interval
    width = (hi - lo) % 1.0 or 1.0
    center = lo + width / 2
    tp = _shrink(cfg)
    beta_cap = cfg.beta_cap_frac * z.n
    done, failed = 0, 0
    radius = width / 2
    while True:
        beta_hat = cfg.t_ary * cfg.s_vote / (2 * width)
        if beta_hat > beta_cap:
            break
        try:
            center = locate1_inner(z, cfg, center, width, rng)
        except NoConsensus:
            failed += 1
            break
        done += 1
        width = width / tp
        radius = width / 2
    if done == 0:
        raise NoConsensus("first stage failed")
    return float(canonical_freq(center)), radius, failed > 0 and done < (done + failed) / 2


def circular_median(values, center):
    off = np.mod(np.asarray(values, dtype=float) - center + 0.5, 1.0) - 0.5
    return float(canonical_freq(center + np.median(off)))


def frequency_recovery_1cluster(z, cfg, interval, rng):
    """Circular median of R_median independent locate1_signal runs."""
    lo, hi = interval
    width = (hi - lo) % 1.0 or 1.0
    est, radii = [], []
    for r in spawn(rng, cfg.R_median):
        try:
            f, rad, _ = locate1_signal(z, cfg, interval, r)
        except (NoConsensus, EmptySignal):
            continue
        est.append(f)
        radii.append(rad)
    if not est:
        raise NoConsensus("all runs failed")
    f = circular_median(est, lo + width / 2)
    return f, float(np.median(radii)), len(est)


def _bin_energy(read, n, margin, count, rng):
    lo, hi = margin, max(margin + 1, n - margin)
    t = rng.integers(lo, hi, size=count)
    return read(t)


def recover_bounded(inst, interval, cfg, rng, n, stretch_min=2):
    """One frequency per inner bucket of a bounded instance.

    ``inst`` reads the instance at integer times. Returns lists
    (freqs, radii, flags, energy).
    """
    rng_hash, rng_probe, rng_bins = spawn(rng, 3)
    B_in = cfg.B_inner
    if B_in >= 2:
        G_in = build_filter_g(B_in, cfg.w_inner, cfg.delta_g, cfg.k)
        s_hi = int(cfg.beta_cap_frac * n // max(G_in.time_support, 1))
        # the stretch must wrap the bounded interval around the circle at least once
        if s_hi < stretch_min:
            B_in = 1
    if B_in < 2:
        z = Cluster(inst, n)
        probe = np.abs(_bin_energy(inst, n, 0, cfg.n_probe, rng_probe)) ** 2
        try:
            f, rad, _ = frequency_recovery_1cluster(z, cfg, interval, rng_bins)
            return [f], [rad], [""], [float(probe.mean())]
        except (NoConsensus, EmptySignal) as exc:
            return [float(canonical_freq(interval[0]))], [1.0], [str(exc)], [float(probe.mean())]

    out = ([], [], [], [])
    # independent inner hashes; tones colliding under one stretch rarely collide under all
    for rep_hash, rep_probe, rep_bins in zip(spawn(rng_hash, cfg.inner_reps), spawn(rng_probe, cfg.inner_reps),
                                             spawn(rng_bins, cfg.inner_reps)):
        p = sample_hash_params_range(B_in, stretch_min, max(stretch_min, min(s_hi, 2 * stretch_min)), rep_hash)
        acc = BinAccessor(inst, G_in, p)
        probes = rep_probe.integers(0, n, size=cfg.n_probe)
        energy = np.mean(np.abs(acc.at_many(probes)) ** 2, axis=0)
        top = energy.max()
        for j, r in zip(range(B_in), spawn(rep_bins, B_in)):
            if not top > 0 or energy[j] < cfg.eta * top:
                continue
            z = Cluster(lambda t, j=j, acc=acc: acc.at_many(t)[:, j], n)
            try:
                f, rad, _ = frequency_recovery_1cluster(z, cfg, interval, r)
                flag = ""
            except (NoConsensus, EmptySignal) as exc:
                f, rad, flag = float(canonical_freq(interval[0])), 1.0, str(exc)
            for lst, v in zip(out, (f, rad, flag, float(energy[j]))):
                lst.append(v)
    return out


def asymptotic_tolerance(k, Delta, d):
    return k * Delta * np.sqrt(k * Delta * d)


def sparse_recover(x, cfg, rng):
    """Candidate frequency list for the signal behind SignalOracle x."""
    if not isinstance(x, SignalOracle):
        x = SignalOracle.from_array(x)
    n = x.n
    c = cfg.resolved(n)
    H = build_filter_h(c.k, c.delta, n, s1=c.h_s1)
    G_out = build_filter_g(c.B_outer, c.w_outer, c.delta_g, 1)
    rng_split, rng_probe, rng_inst = spawn(rng, 3)
    b0 = rng_split.random()
    splits = []
    for i in range(c.n_splits):
        insts, p = outer_split(x, c.B_outer, None, H=H, G=G_out, b=b0 + i / (c.n_splits * c.B_outer))
        splits.append(insts)
    probes = rng_probe.integers(0, n, size=c.n_probe)
    energy = np.array([np.mean(np.abs(insts[0].acc.at_many(probes)) ** 2, axis=0) for insts in splits])
    top = energy.max()
    Delta = c.k * H.fourier_support_width
    meta = {
        "n": n,
        "config": c.to_dict(),
        "outer": [insts[0].acc.p.to_json() for insts in splits],
        "filter_h": asdict(H),
        "filter_g_outer": asdict(G_out),
        "bucket_energy": energy.tolist(),
        "asymptotic_tolerance": float(asymptotic_tolerance(c.k, Delta, n)),
    }
    if not top > 0:
        return FrequencyList.empty(reads=x.reads, meta=meta)

    freqs, radii, flags, energies, prov, arcs = [], [], [], [], [], []
    for si, (insts, rs) in enumerate(zip(splits, spawn(rng_inst, c.n_splits))):
        for inst, r in zip(insts, spawn(rs, c.B_outer)):
            if energy[si, inst.j] < c.eta * top:
                continue
            f, rad, fl, en = recover_bounded(inst.read, inst.interval, c, r, n, stretch_min=max(2, c.B_outer))
            freqs += f
            radii += rad
            flags += fl
            energies += en
            prov += [f"split{si}/outer{inst.j}"] * len(f)
            arcs += [inst.interval] * len(f)

    freqs, radii, energies = map(np.asarray, (freqs, radii, energies))
    flags = _supersede(freqs, radii, list(flags), arcs)
    freqs, radii, flags, energies, prov = _dedup(freqs, radii, flags, energies, prov)
    order = np.argsort(-energies, kind="stable")[: c.list_cap]
    order = np.sort(order)
    freqs, radii, energies = freqs[order], radii[order], energies[order]
    flags = [flags[i] for i in order]
    prov = [prov[i] for i in order]
    ok = np.array([f in ("", "degraded") for f in flags], dtype=bool)
    window = float(radii[ok].max()) if ok.any() else 0.0
    return FrequencyList(freqs, radii, flags, energies, window, prov, x.reads, meta)


def _in_arc(f, arc):
    lo, hi = arc
    return (f - lo) % 1.0 <= (hi - lo) % 1.0


def _supersede(freqs, radii, flags, arcs, ratio=2.0):
    """Flag coarse estimates whose bucket also holds a sharp estimate.

    A locate run that stalls early usually means its bucket held several
    tones; the half-bucket shifted split then resolves them separately.
    """
    good = [i for i, fl in enumerate(flags) if fl == ""]
    if not good:
        return flags
    sharp = radii[good].min() * ratio
    precise = [i for i in good if radii[i] <= sharp]
    for i in good:
        if radii[i] > sharp and any(_in_arc(freqs[j], arcs[i]) for j in precise):
            flags[i] = "superseded"
    return flags


def _dedup(freqs, radii, flags, energies, prov):
    """Merge good entries that sit within each other's radius, keeping the most energetic."""
    keep = []
    order = np.argsort(-energies, kind="stable")
    for i in order:
        if flags[i] not in ("", "degraded"):
            keep.append(i)
            continue
        dup = any(
            flags[j] in ("", "degraded") and wrap_dist(freqs[i], freqs[j]) <= max(radii[i], radii[j])
            for j in keep)
        if not dup:
            keep.append(i)
    keep = sorted(keep)
    return (freqs[keep], radii[keep], [flags[i] for i in keep], energies[keep], [prov[i] for i in keep])
