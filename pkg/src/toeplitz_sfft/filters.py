"""Flat-top time window H and bucketing filter G.

H is a length ``d*s3`` box centred at ``d/2`` smoothed by the kernel
``a * sinc(a u)**l / Z_l``; its spectrum is the box's sinc times an l-fold
self-convolved rectangle, so it is supported on ``[-l a/2, l a/2]``.

G is a frequency-domain box of width ``(1 - w/2)/B`` smoothed by a Gaussian,
which in time is a sinc times a Gaussian, truncated to ``|t| <= lB/w``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from math import ceil, comb, floor, log, pi, sqrt

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import ndtri

# quadrature grid for the kernel tail integral
_TAIL_STEP = 1.0 / 128
_TAIL_SPAN = 2048.0

H_S1 = 112.0
H_C3 = 0.1
H_MIN_L = 4
ENVELOPE_SPAN = 8


class FilterError(ValueError):
    pass


@lru_cache(maxsize=None)
def _tail_table(l):
    """Normalised upper tail of sinc**l: tail(v) = int_v^inf sinc^l / int_R sinc^l."""
    v = np.arange(0.0, _TAIL_SPAN + _TAIL_STEP / 2, _TAIL_STEP)
    f = np.sinc(v) ** l
    c = cumulative_simpson(f[::-1], dx=_TAIL_STEP, initial=0.0)[::-1]
    # beyond the table sin^l averages to comb(l, l/2)/2^l
    c = c + comb(l, l // 2) / 2**l * pi**-l * _TAIL_SPAN ** (1 - l) / (l - 1)
    Z = 2.0 * c[0]
    return v, c / Z, Z


def kernel_tail(l, x):
    v, tl, _ = _tail_table(l)
    x = np.asarray(x, dtype=float)
    out = np.interp(np.abs(x), v, tl, right=0.0)
    return np.where(x >= 0, out, 1.0 - out)


@dataclass(frozen=True)
class FilterH:
    k: int
    delta: float
    d: int
    s0: float
    s1: float
    s3: float
    l: int

    @property
    def a(self):
        return self.s1 / (self.d * self.s3)

    @property
    def box_len(self):
        return self.d * self.s3

    @property
    def fourier_support_width(self):
        return self.s1 * self.l / (self.d * self.s3)

    def __call__(self, t):
        return eval_h(self, t)

    def envelope(self, t):
        """Decay bound s0 (s1 (|t-d/2|/(d s3) - 1/2) + 2)^-l."""
        u = np.abs(np.asarray(t, dtype=float) - self.d / 2)
        v = np.maximum(self.a * (u - self.box_len / 2), 0.0)
        return self.s0 * (v + 2.0) ** (-self.l)

    def core_radius(self):
        return self.d * (0.5 - 2.0 / self.s1) * self.s3

    def to_json(self):
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, s):
        return cls(**json.loads(s))


def eval_h(H, t):
    u = np.abs(np.asarray(t, dtype=float) - H.d / 2)
    half = H.box_len / 2
    # kernel mass falling inside the box around u
    out = 1.0 - kernel_tail(H.l, H.a * (half - u)) - kernel_tail(H.l, H.a * (half + u))
    return np.clip(out, 0.0, 1.0)


def choose_h_order(delta):
    """Smallest even l >= 4 whose kernel tail past 2 is at most delta/4."""
    l = H_MIN_L
    while float(kernel_tail(l, 2.0)) > delta / 4:
        l += 2
        if l > 64:
            raise FilterError(f"delta={delta} too small for the tabulated kernel")
    return l


def build_filter_h(k, delta, d, s1=H_S1, c3=H_C3, l=None):
    if k < 1 or not 0 < delta < 1:
        raise FilterError("need k >= 1 and 0 < delta < 1")
    l = choose_h_order(delta) if l is None else int(l)
    if l % 2:
        raise FilterError("kernel order l must be even")
    s3 = 1.0 - c3 / s1
    if not 0 < s3 < 1:
        raise FilterError(f"s3={s3} outside (0, 1)")
    width = s1 * l / (d * s3)
    if width >= 0.5:
        raise FilterError(f"d={d} too small: spectral support {width:.3f} >= 1/2")
    H = FilterH(int(k), float(delta), int(d), 1.0, float(s1), float(s3), l)
    return FilterH(H.k, H.delta, H.d, _fit_s0(H), H.s1, H.s3, H.l)


def _fit_s0(H):
    u = H.box_len / 2 + np.arange(0, ENVELOPE_SPAN * H.d + 1, dtype=float)
    v = H.a * (u - H.box_len / 2)
    fit = float(np.max(eval_h(H, H.d / 2 + u) * (v + 2.0) ** H.l))
    # beyond the fitted span: H(v) <= a L / (Z pi^l v^l) = s1 / (Z pi^l v^l)
    _, _, Z = _tail_table(H.l)
    vmax = v[-1]
    far = H.s1 / (Z * pi**H.l) * (1 + 2 / vmax) ** H.l
    return max(fit, far, 1.0)


def validate_h(H, trials=20, rng=None, tol=None, k=None):
    """Check the window contract on random k-sparse signals.

    Returns a dict with per-property pass flags and the worst observed values.
    Out-of-window sums run over |t - d/2| <= 8d and the rest is bounded
    through the decay envelope.
    """
    rng = np.random.default_rng(rng)
    tol = 2 * H.delta if tol is None else tol
    k = H.k if k is None else k
    d = H.d
    t = np.arange(-ENVELOPE_SPAN * d, (ENVELOPE_SPAN + 1) * d + 1)
    h = eval_h(H, t)
    u = np.abs(t - d / 2)
    rep = {}

    core = u <= H.core_radius()
    rep["I"] = bool(np.all(h[core] >= 1 - tol) and np.all(h[core] <= 1))
    shoulder = (u >= H.core_radius()) & (u <= H.box_len / 2)
    rep["II"] = bool(np.all((h[shoulder] >= 0) & (h[shoulder] <= 1)))
    outer = u >= H.box_len / 2
    rep["III"] = bool(np.all(h[outer] <= H.envelope(t[outer]) * (1 + 1e-9)))
    rep["IV"] = H.fourier_support_width < 0.5

    inside = (t >= 0) & (t < d)
    # envelope bound on the remainder beyond the summed span, per unit (sum |a_f|)^2
    a = H.a
    vU = a * (u.max() - H.box_len / 2)
    rem_unit = 2 * H.s0**2 * (vU + 2.0) ** (1 - 2 * H.l) / (a * (2 * H.l - 1))

    worst_in, worst_out = 1.0, 0.0
    for _ in range(trials):
        f = rng.random(k)
        c = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        x = np.exp(2j * np.pi * np.outer(t, f)) @ c
        e = np.sum(np.abs(x[inside]) ** 2)
        if e == 0:
            continue
        ein = np.sum(np.abs(x[inside] * h[inside]) ** 2) / e
        eout = (np.sum(np.abs(x[~inside] * h[~inside]) ** 2) + rem_unit * np.sum(np.abs(c)) ** 2) / e
        worst_in = min(worst_in, ein)
        worst_out = max(worst_out, eout)
    rep["V"] = bool(worst_out <= tol)
    rep["VI"] = bool(0.99 <= worst_in <= 1 + 1e-12)
    rep["worst_in_ratio"] = float(worst_in)
    rep["worst_out_ratio"] = float(worst_out)
    rep["passed"] = all(rep[p] for p in ("I", "II", "III", "IV", "V", "VI"))
    return rep


@dataclass(frozen=True)
class FilterG:
    B: int
    w: float
    delta: float
    k: int
    l: int
    sigma_f: float
    scale: float

    @property
    def time_support(self):
        """Largest t with G(t) possibly nonzero."""
        return int(floor(self.l * self.B / self.w))

    @property
    def folds(self):
        return int(ceil(self.time_support / self.B))

    @property
    def box_width(self):
        return (1 - self.w / 2) / self.B

    @property
    def max_bound(self):
        return self.scale * self.box_width

    def to_json(self):
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, s):
        return cls(**json.loads(s))


def _g_raw(B, w, sigma_f, l, t):
    t = np.asarray(t, dtype=float)
    width = (1 - w / 2) / B
    g = width * np.sinc(width * t) * np.exp(-2 * pi**2 * sigma_f**2 * t**2)
    return np.where(np.abs(t) <= floor(l * B / w), g, 0.0)


def build_filter_g(B, w, delta, k=1):
    if B < 2 or not 0 < w < 1 or not 0 < delta < 1 or k < 1:
        raise FilterError("need B >= 2, 0 < w < 1, 0 < delta < 1, k >= 1")
    z = float(-ndtri(delta / (2 * k)))
    sigma_f = w / (4 * B * z)
    l = max(ceil(2 * log(k / delta)), ceil(z * sqrt(8 * log(100 * k / delta)) / pi), 1)
    G0 = FilterG(int(B), float(w), float(delta), int(k), int(l), sigma_f, 1.0)
    # renormalise so the truncated response never exceeds 1
    peak = float(np.max(eval_g_freq(G0, np.linspace(0, 1 / (2 * B), 257))))
    return FilterG(G0.B, G0.w, G0.delta, G0.k, G0.l, sigma_f, 1.0 / peak)


def eval_g_time(G, t):
    return G.scale * _g_raw(G.B, G.w, G.sigma_f, G.l, t)


def eval_g_freq(G, f):
    f = np.asarray(f, dtype=float)
    T = G.time_support
    ts = np.arange(1, T + 1)
    g = eval_g_time(G, ts)
    out = eval_g_time(G, 0.0) + 2 * np.cos(2 * pi * np.multiply.outer(f, ts)) @ g
    return out


def validate_g(G, grid=4096):
    f = np.linspace(0, 0.5, grid + 1)
    # make sure the mask edges themselves are sampled
    f = np.unique(np.concatenate([f, [(1 - G.w) / (2 * G.B), 1 / (2 * G.B)]]))
    r = eval_g_freq(G, f)
    lo, hi = (1 - G.w) / (2 * G.B), 1 / (2 * G.B)
    eps = G.delta / G.k
    pas = f <= lo + 1e-15
    trans = (f >= lo - 1e-15) & (f <= hi + 1e-15)
    stop = f >= hi - 1e-15
    rep = {
        "I": bool(np.all((r[pas] >= 1 - eps) & (r[pas] <= 1 + 1e-12))),
        "II": bool(np.all((r[trans] >= 0) & (r[trans] <= 1 + 1e-12))),
        "III": bool(np.all(np.abs(r[stop]) <= eps)),
        "IV": bool(eval_g_time(G, G.time_support + 1) == 0 and eval_g_time(G, -G.time_support - 1) == 0),
        "V": bool(np.max(np.abs(eval_g_time(G, np.arange(-G.time_support, G.time_support + 1))))
                  <= G.max_bound * (1 + 1e-12)),
        "max_passband_dev": float(np.max(1 - r[pas])),
        "max_stopband": float(np.max(np.abs(r[stop]))),
        "monotone_rolloff": bool(np.all(np.diff(r[trans]) <= 1e-12)),
    }
    rep["passed"] = all(rep[p] for p in ("I", "II", "III", "IV", "V"))
    return rep
