"""Toeplitz and Fourier domain types, DTFT helpers and entry/sample access.

Conventions used throughout the package:

* indices are 0-based, ``[d] = {0, ..., d-1}``;
* frequencies live on the circle ``[0, 1)``;
* the DTFT is ``xhat(f) = sum_n x(n) exp(-2 pi i f n)``;
* a symmetric Toeplitz matrix is stored by its first column.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CONJ_TOL = 1e-12
REAL_TOL = 1e-10


class ConjugateClosureError(ValueError):
    """Raised when a frequency set is not closed under f -> 1 - f."""


class BudgetExceeded(RuntimeError):
    pass


def canonical_freq(f):
    """Map frequencies to [0, 1), snapping values within CONJ_TOL of 1 to 0."""
    f = np.mod(np.asarray(f, dtype=float), 1.0)
    return np.where(f > 1.0 - CONJ_TOL, 0.0, f)


def conjugate_freq(f):
    return canonical_freq(-np.asarray(f, dtype=float))


def wrap_dist(f1, f2):
    """Wrap-around distance on the unit circle, in [0, 1/2]."""
    diff = np.mod(np.abs(np.asarray(f1, dtype=float) - np.asarray(f2, dtype=float)), 1.0)
    out = np.minimum(diff, 1.0 - diff)
    if out.ndim == 0:
        return float(out)
    return out


def is_self_conjugate(f, tol=CONJ_TOL):
    f = np.asarray(f, dtype=float)
    return (wrap_dist(f, 0.0) <= tol) | (wrap_dist(f, 0.5) <= tol)


def conjugate_partner(freqs, tol=CONJ_TOL):
    """Index of the conjugate of every frequency, or -1 when it is missing.

    ``freqs`` must be sorted.
    """
    freqs = np.asarray(freqs, dtype=float)
    target = conjugate_freq(freqs)
    pos = np.searchsorted(freqs, target)
    partner = np.full(len(freqs), -1, dtype=int)
    for i, (t, p) in enumerate(zip(target, pos)):
        for c in (p - 1, p, p + 1, 0, len(freqs) - 1):
            if 0 <= c < len(freqs) and wrap_dist(freqs[c], t) <= tol:
                partner[i] = c
                break
    return partner


@dataclass(frozen=True)
class SymToeplitz:
    """Real symmetric Toeplitz matrix stored as its first column."""

    col: np.ndarray

    def __post_init__(self):
        col = np.asarray(self.col, dtype=float).ravel()
        if col.size == 0:
            raise ValueError("empty column")
        object.__setattr__(self, "col", col)

    @property
    def d(self):
        return self.col.size

    def entry(self, i, j):
        return self.col[np.abs(np.asarray(i) - np.asarray(j))]

    def frob_norm(self):
        # each lag l appears 2(d - l) times off the diagonal
        d = self.d
        mult = 2.0 * (d - np.arange(d))
        mult[0] = d
        return float(np.sqrt(np.sum(mult * self.col**2)))

    def __add__(self, other):
        return SymToeplitz(self.col + other.col)

    def __sub__(self, other):
        return SymToeplitz(self.col - other.col)

    def scaled(self, c):
        return SymToeplitz(c * self.col)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.d}\n")
            for v in self.col:
                fh.write(f"{float(v)!r}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ValueError(f"{path}: empty matrix file")
        try:
            d = int(lines[0])
        except ValueError:
            raise ValueError(f"{path}:1: expected integer dimension, got {lines[0]!r}") from None
        vals = []
        for lineno, ln in enumerate(lines[1:], start=2):
            try:
                vals.append(float(ln))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value {ln!r}") from None
        if len(vals) != d:
            raise ValueError(f"{path}: header says d={d} but found {len(vals)} values")
        return cls(np.array(vals))


@dataclass(frozen=True)
class FourierToeplitz:
    """Factored Toeplitz matrix F_S diag(weights) F_S^* with conjugate-closed S."""

    freqs: np.ndarray
    weights: np.ndarray
    d: int
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        f = canonical_freq(np.atleast_1d(self.freqs))
        w = np.atleast_1d(np.asarray(self.weights))
        if np.iscomplexobj(w):
            if np.any(np.abs(w.imag) > REAL_TOL * max(1.0, np.abs(w).max(initial=0))):
                raise ValueError("weights must be real")
            w = w.real
        w = w.astype(float)
        if f.shape != w.shape:
            raise ValueError("freqs and weights differ in length")
        order = np.argsort(f, kind="stable")
        f, w = f[order], w[order]
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "d", int(self.d))
        if self.check:
            partner = conjugate_partner(f)
            bad = partner < 0
            if np.any(bad):
                raise ConjugateClosureError(f"missing conjugates for {f[bad][:5]}")
            scale = max(1.0, np.abs(w).max(initial=0.0))
            if np.any(np.abs(w - w[partner]) > 1e-9 * scale):
                raise ConjugateClosureError("conjugate weights differ")

    @classmethod
    def closed(cls, freqs, weights, d):
        """Build from one representative per conjugate pair.

        Non self-conjugate frequencies get their partner added with the same weight.
        """
        freqs = canonical_freq(np.atleast_1d(freqs))
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        fs, ws = [], []
        for f, w in zip(freqs, weights):
            fs.append(f)
            ws.append(w)
            if not is_self_conjugate(f):
                fs.append(conjugate_freq(f))
                ws.append(w)
        fs, ws = np.array(fs), np.array(ws)
        # repeated frequencies collapse into one with the summed weight
        order = np.argsort(fs, kind="stable")
        fs, ws = fs[order], ws[order]
        start = np.concatenate([[True], np.diff(fs) > CONJ_TOL]) if fs.size else np.zeros(0, bool)
        groups = np.cumsum(start) - 1
        return cls(fs[start], np.bincount(groups, weights=ws) if fs.size else ws, d)

    @classmethod
    def empty(cls, d):
        return cls(np.zeros(0), np.zeros(0), d)

    @property
    def rank(self):
        return int(np.count_nonzero(self.weights))

    def lag_values(self, lags):
        """Complex sum_f a_f exp(2 pi i f lag) for an array of integer lags."""
        lags = np.asarray(lags)
        if self.freqs.size == 0:
            return np.zeros(lags.shape, dtype=complex)
        flat = lags.ravel().astype(float)
        out = np.empty(flat.size, dtype=complex)
        step = max(1, 2**22 // max(1, self.freqs.size))
        for s in range(0, flat.size, step):
            ph = np.exp(2j * np.pi * np.outer(flat[s:s + step], self.freqs))
            out[s:s + step] = ph @ self.weights
        return out.reshape(lags.shape)

    def first_column(self):
        vals = self.lag_values(np.arange(self.d))
        _check_real(vals, self.weights)
        return vals.real

    def to_symtoeplitz(self):
        return SymToeplitz(self.first_column())

    def entry(self, i, j):
        return toeplitz_entry(self, i, j)

    def to_json(self):
        return {"d": self.d, "freqs": self.freqs.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["freqs"], dtype=float), np.array(obj["weights"], dtype=float), int(obj["d"]))


def _check_real(vals, weights):
    tol = REAL_TOL * max(np.sum(np.abs(weights)), np.finfo(float).tiny)
    resid = np.max(np.abs(np.imag(vals)), initial=0.0)
    if resid > tol:
        raise ConjugateClosureError(f"imaginary residue {resid:.3g} exceeds {tol:.3g}")


def toeplitz_entry(F, i, j):
    """Entry (i, j) of F_S D F_S^*, i.e. Re sum_f a_f exp(2 pi i f (i - j))."""
    vals = F.lag_values(np.asarray(i) - np.asarray(j))
    _check_real(vals, F.weights)
    out = np.real(vals)
    return float(out) if out.ndim == 0 else out


class EntryOracle:
    """Entrywise access to a d x d matrix with exact, memoized query accounting.

    ``source(ii, jj)`` must accept equal-shape integer arrays and return the
    entries. Every distinct (i, j) pair is charged once.
    """

    def __init__(self, source: Callable, d: int, budget: int | None = None):
        self.source = source
        self.d = int(d)
        self.budget = budget
        self._memo: dict[int, float] = {}

    @property
    def queries_used(self):
        return len(self._memo)

    def __call__(self, i, j):
        return float(self.read_many(np.array([i]), np.array([j]))[0])

    def read_many(self, ii, jj):
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        shape = np.broadcast_shapes(ii.shape, jj.shape)
        ii = np.broadcast_to(ii, shape).ravel()
        jj = np.broadcast_to(jj, shape).ravel()
        if ii.size and (ii.min() < 0 or jj.min() < 0 or ii.max() >= self.d or jj.max() >= self.d):
            raise IndexError("entry index outside [d] x [d]")
        keys = ii * self.d + jj
        uniq, inv = np.unique(keys, return_inverse=True)
        memo = self._memo
        missing = np.array([k for k in uniq.tolist() if k not in memo], dtype=np.int64)
        if missing.size:
            if self.budget is not None and len(memo) + missing.size > self.budget:
                raise BudgetExceeded(f"query budget {self.budget} exhausted")
            vals = np.asarray(self.source(missing // self.d, missing % self.d), dtype=float)
            memo.update(zip(missing.tolist(), vals.tolist()))
        got = np.array([memo[k] for k in uniq.tolist()], dtype=float)
        return got[inv].reshape(shape)

    @classmethod
    def from_toeplitz(cls, T, noise=None, budget=None):
        """Oracle for T + E where T is SymToeplitz/FourierToeplitz and E a dense array."""
        col = T.first_column() if isinstance(T, FourierToeplitz) else T.col
        d = col.size
        if noise is None:
            src = lambda i, j: col[np.abs(i - j)]
        else:
            noise = np.asarray(noise, dtype=float)
            src = lambda i, j: col[np.abs(i - j)] + noise[i, j]
        return cls(src, d, budget)

    @classmethod
    def from_dense(cls, A, budget=None):
        A = np.asarray(A, dtype=float)
        return cls(lambda i, j: A[i, j], A.shape[0], budget)


class SignalOracle:
    """Sample access to a signal on [n]; reads outside [n] return 0 and are free.

    Distinct in-range reads are counted once. Values are cached so the
    underlying source (often an EntryOracle) is touched at most once per t.
    """

    def __init__(self, source: Callable, n: int):
        self.source = source
        self.n = int(n)
        self._vals = np.zeros(self.n, dtype=complex)
        self._seen = np.zeros(self.n, dtype=bool)

    @property
    def reads(self):
        return int(self._seen.sum())

    def read(self, t):
        t = np.asarray(t, dtype=np.int64)
        out = np.zeros(t.shape, dtype=complex)
        inside = (t >= 0) & (t < self.n)
        ti = t[inside]
        if ti.size:
            new = np.unique(ti[~self._seen[ti]])
            if new.size:
                self._vals[new] = self.source(new)
                self._seen[new] = True
            out[inside] = self._vals[ti]
        return out

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=complex)
        return cls(lambda t: x[t], x.size)


@dataclass(frozen=True)
class SparseSignal:
    """x*(t) = sum_f a_f exp(2 pi i f t) observed on [d]."""

    freqs: np.ndarray
    coeffs: np.ndarray
    d: int

    def __post_init__(self):
        f = canonical_freq(np.atleast_1d(self.freqs))
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if f.shape != c.shape:
            raise ValueError("freqs and coeffs differ in length")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    @property
    def k(self):
        return self.freqs.size

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if self.k == 0:
            return np.zeros(t.shape, dtype=complex)
        return np.exp(2j * np.pi * np.multiply.outer(t, self.freqs)) @ self.coeffs

    def samples(self):
        return self.eval(np.arange(self.d))

    def norm_d2(self):
        return float(np.sum(np.abs(self.samples()) ** 2))

    def to_json(self):
        return {
            "d": self.d,
            "freqs": self.freqs.tolist(),
            "coeffs": [[c.real, c.imag] for c in self.coeffs],
        }

    @classmethod
    def from_json(cls, obj):
        coeffs = np.array([complex(re, im) for re, im in obj["coeffs"]]) if obj["coeffs"] else np.zeros(0)
        return cls(np.array(obj["freqs"], dtype=float), coeffs, int(obj["d"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def dense_dtft(x, grid_size):
    """DTFT of x on the grid f = m / grid_size, m in [grid_size].

    Returns (grid, spectrum). Brute-force reference for recovery tests.
    """
    x = np.asarray(x, dtype=complex)
    if grid_size < x.size:
        raise ValueError("grid_size must be at least len(x)")
    grid = np.arange(grid_size) / grid_size
    return grid, np.fft.fft(x, n=grid_size)


def spawn(rng, n):
    """n independent child generators drawn from rng."""
    seeds = rng.integers(0, 2**63, size=n)
    return [np.random.default_rng(int(x)) for x in seeds]
