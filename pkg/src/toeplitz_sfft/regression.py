"""Leverage-score sampling and sampled Fourier least squares.

A symmetric Toeplitz matrix is matched through its first column weighted by
``w`` (w[0] = sqrt(d), w[i] = sqrt(2 (d - i))), which turns the Frobenius
distance between two Toeplitz matrices into a Euclidean one. Matrix fits use
two independent leverage samples, one per side.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import ceil, log

import numpy as np
from scipy.linalg import qr, solve_triangular

from .core import FourierToeplitz, canonical_freq, conjugate_freq, is_self_conjugate, wrap_dist

COND_LIMIT = 1e12
RIDGE = 1e-10
C_TAU = 1.0
C_S = 2.0
BRUTE_CAP = 64


def weight_vector(d):
    if d < 1:
        raise ValueError("d must be positive")
    w = np.sqrt(2.0 * (d - np.arange(d)))
    w[0] = np.sqrt(d)
    return w


@dataclass(frozen=True)
class LeverageProfile:
    d: int
    r: int
    tau: np.ndarray

    @property
    def total(self):
        return float(self.tau.sum())


def dyadic_bands(d):
    """Row bands of lengths d/2, d/4, ..., 1 followed by the remaining rows."""
    bands, start, rem = [], 0, d
    while rem > 1:
        n = rem // 2
        bands.append((start, start + n))
        start += n
        rem -= n
    if rem:
        bands.append((start, start + rem))
    return bands


def band_bound(n, r, C=C_TAU):
    """Per-row bound inside one band of length n."""
    if n <= r:
        return np.ones(n)
    j = np.arange(1, n + 1)
    edge = r / np.minimum(j, n + 1 - j)
    far = C * r**6 * log(r + 1) ** 3 / n
    return np.minimum(1.0, np.minimum(edge, far))


def leverage_bounds(d, r, C=C_TAU):
    if r > d:
        raise ValueError("r must not exceed d")
    r = max(int(r), 1)
    tau = np.empty(d)
    for lo, hi in dyadic_bands(d):
        tau[lo:hi] = band_bound(hi - lo, r, C)
    return LeverageProfile(int(d), r, tau)


@dataclass(frozen=True)
class SamplingRows:
    rows: np.ndarray
    scale: np.ndarray
    p: np.ndarray

    @property
    def m(self):
        return self.rows.size


def sampling_distribution(prof):
    return 0.5 * (prof.tau / prof.total + 1.0 / prof.d)


def draw_sampling_rows(prof, m, rng):
    if m < 1:
        raise ValueError("need at least one row")
    p = sampling_distribution(prof)
    p = p / p.sum()
    rows = rng.choice(prof.d, size=int(m), p=p)
    return SamplingRows(rows, 1.0 / np.sqrt(m * p[rows]), p)


def all_rows(d):
    """Deterministic 'sample' taking every row once with unit scale."""
    return SamplingRows(np.arange(d), np.ones(d), np.full(d, 1.0 / d))


@dataclass(frozen=True)
class ConjugatePairing:
    """Real degrees of freedom of a conjugate-closed frequency set.

    ``reps[p]`` is one member of pair p and ``mult[p]`` is 2 for a true pair,
    1 for a self-conjugate frequency (0 or 1/2).
    """

    reps: np.ndarray
    mult: np.ndarray

    @classmethod
    def from_freqs(cls, freqs, tol=1e-12):
        f = np.sort(canonical_freq(np.atleast_1d(freqs)))
        reps, mult, used = [], [], np.zeros(f.size, dtype=bool)
        for i, fi in enumerate(f):
            if used[i]:
                continue
            used[i] = True
            if is_self_conjugate(fi, tol):
                reps.append(fi)
                mult.append(1)
                continue
            conj = conjugate_freq(fi)
            cand = np.flatnonzero(~used & (wrap_dist(f, conj) <= tol))
            if cand.size == 0:
                raise ValueError(f"frequency {fi} has no conjugate")
            used[cand[0]] = True
            reps.append(min(fi, conj))
            mult.append(2)
        return cls(np.array(reps, dtype=float), np.array(mult, dtype=float))

    @classmethod
    def from_reps(cls, reps, tol=1e-12):
        reps = canonical_freq(np.atleast_1d(reps))
        reps = np.sort(np.where(reps > 0.5, 1.0 - reps, reps))
        if reps.size:
            reps = reps[np.concatenate([[True], np.diff(reps) > tol])]
        mult = np.where(is_self_conjugate(reps, tol), 1.0, 2.0)
        return cls(reps, mult)

    @property
    def n_pairs(self):
        return self.reps.size

    def freqs(self):
        out = list(self.reps)
        out += [conjugate_freq(f) for f, m in zip(self.reps, self.mult) if m == 2]
        return np.sort(canonical_freq(np.array(out, dtype=float)))

    def collapse(self):
        """|S| x n_pairs 0/1 matrix tying conjugate weights, rows in freqs() order."""
        fs = self.freqs()
        R = np.zeros((fs.size, self.n_pairs))
        for p, rep in enumerate(self.reps):
            R[wrap_dist(fs, rep) <= 1e-12, p] = 1
            R[wrap_dist(fs, conjugate_freq(rep)) <= 1e-12, p] = 1
        return R

    def design(self, lags):
        """Real Toeplitz values per unit pair weight at integer lags, shape lags.shape + (n_pairs,)."""
        lags = np.asarray(lags, dtype=float)
        return self.mult * np.cos(2 * np.pi * np.multiply.outer(lags, self.reps))

    def to_fourier(self, coef, d):
        coef = np.asarray(coef, dtype=float)
        f = list(self.reps)
        a = list(coef)
        for rep, m, c in zip(self.reps, self.mult, coef):
            if m == 2:
                f.append(conjugate_freq(rep))
                a.append(c)
        return FourierToeplitz(np.array(f), np.array(a), d)

    def union(self, other, tol=1e-15):
        reps = list(self.reps)
        for r in other.reps:
            if not reps or np.min(np.abs(np.array(reps) - r)) > tol:
                reps.append(r)
        return ConjugatePairing.from_reps(np.array(reps))


@dataclass
class LsqInfo:
    cond: float
    ridge: bool
    rank_deficient: bool
    extra: dict = field(default_factory=dict)


def solve_lsq(A, y):
    """Least squares by column-pivoted QR; ridge fallback on ill conditioning."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n = A.shape[1]
    if n == 0:
        return np.zeros(0), LsqInfo(1.0, False, False)
    Q, R, P = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    cond = float(diag[0] / diag[-1]) if diag.size and diag[-1] > 0 else np.inf
    if diag.size and diag[0] == 0:
        return np.zeros(n), LsqInfo(np.inf, False, True)
    if cond <= COND_LIMIT and A.shape[0] >= n:
        z = solve_triangular(R, Q.T @ y)
        x = np.empty(n)
        x[P] = z
        return x, LsqInfo(cond, False, False)
    lam = RIDGE * np.linalg.norm(A, 2)
    As = np.vstack([A, lam * np.eye(n)])
    ys = np.concatenate([y, np.zeros(n)])
    x = np.linalg.lstsq(As, ys, rcond=None)[0]
    return x, LsqInfo(cond, True, True)


def _as_pairing(S):
    if isinstance(S, ConjugatePairing):
        return S
    if isinstance(S, FourierToeplitz):
        return ConjugatePairing.from_freqs(S.freqs)
    return ConjugatePairing.from_freqs(S)


def column_design(S, rows, d):
    w = weight_vector(d)
    return (rows.scale * w[rows.rows])[:, None] * S.design(rows.rows)


def solve_weighted_column_regression(col_oracle, S, rows, d):
    """argmin_a || samp W (F_S R_S a - T_1) ||.

    ``col_oracle(j)`` returns first-column entries T[j, 0] for an index array.
    Returns (coefficients per pair, sampled cost, info).
    """
    S = _as_pairing(S)
    y = np.asarray(col_oracle(rows.rows), dtype=float) * rows.scale * weight_vector(d)[rows.rows]
    A = column_design(S, rows, d)
    a, info = solve_lsq(A, y)
    cost = float(np.linalg.norm(A @ a - y))
    return a, cost, info


def full_column_cost(col, S, a):
    """||W (T_1 - F_S R_S a)||_2, the Frobenius distance of the two Toeplitz matrices."""
    S = _as_pairing(S)
    d = col.size
    fit = S.design(np.arange(d)) @ np.asarray(a, dtype=float) if S.n_pairs else np.zeros(d)
    return float(np.linalg.norm(weight_vector(d) * (col - fit)))


def dense_column_optimum(col, S):
    S = _as_pairing(S)
    d = col.size
    rows = all_rows(d)
    A = column_design(S, rows, d)
    a, _ = solve_lsq(A, weight_vector(d) * col)
    return a, full_column_cost(col, S, a)


def refine_residual(col_oracle, S_prev, a_prev, grid, rows2, d):
    """Fit the residual T_1 - F_S R_S a_prev over a candidate grid and merge."""
    S_prev = _as_pairing(S_prev)
    grid = _as_pairing(grid)
    a_prev = np.asarray(a_prev, dtype=float)

    def resid(j):
        base = np.asarray(col_oracle(j), dtype=float)
        return base - (S_prev.design(j) @ a_prev if S_prev.n_pairs else 0.0)

    a_new, cost, info = solve_weighted_column_regression(resid, grid, rows2, d)
    merged = ConjugatePairing(np.concatenate([S_prev.reps, grid.reps]),
                              np.concatenate([S_prev.mult, grid.mult]))
    return merged, np.concatenate([a_prev, a_new]), cost, info


def sample_count(n_unknowns, C=C_S):
    m = max(int(n_unknowns), 1)
    return int(ceil(C * m * log(m + 1) ** 2))


@dataclass
class MatrixFit:
    pairing: ConjugatePairing
    coef: np.ndarray
    sampled_cost: float
    zero_cost: float
    s: int
    info: LsqInfo
    rows: SamplingRows = None
    cols: SamplingRows = None

    def to_fourier(self, d):
        return self.pairing.to_fourier(self.coef, d)


def solve_matrix_regression(oracle, M, rng, s=None, C_s=C_S, C_tau=C_TAU):
    """Diagonal weights for min ||B - F_M D F_M^*||_F from an s x s leverage sample of B.

    ``oracle`` is an EntryOracle on B. Conjugate weights are tied, so there
    is one real unknown per pair.
    """
    M = _as_pairing(M)
    d = oracle.d
    if s is None:
        s = sample_count(M.n_pairs, C_s)
    prof = leverage_bounds(d, min(d, max(1, M.freqs().size)), C_tau)
    r1 = draw_sampling_rows(prof, s, rng)
    r2 = draw_sampling_rows(prof, s, rng)
    vals = oracle.read_many(r1.rows[:, None], r2.rows[None, :])
    wts = np.outer(r1.scale, r2.scale)
    Y = vals * wts
    zero_cost = float(np.linalg.norm(Y))
    if M.n_pairs == 0:
        return MatrixFit(M, np.zeros(0), zero_cost, zero_cost, s, LsqInfo(1.0, False, False), r1, r2)
    coef, info, cost = _blocked_lsq(M, r1, r2, wts, Y)
    return MatrixFit(M, coef, cost, zero_cost, s, info, r1, r2)


def _blocks(M, r1, r2, wts, Y, budget=2**22):
    step = max(1, budget // max(1, r2.m * M.n_pairs))
    for lo in range(0, r1.m, step):
        lags = np.subtract.outer(r1.rows[lo:lo + step], r2.rows)
        A = (M.design(lags) * wts[lo:lo + step, :, None]).reshape(-1, M.n_pairs)
        yield A, Y[lo:lo + step].ravel()


def _blocked_lsq(M, r1, r2, wts, Y):
    """Least squares over the s^2 sampled entries, reduced blockwise by QR."""
    R, qy = None, None
    for A, y in _blocks(M, r1, r2, wts, Y):
        if R is not None:
            A = np.vstack([R, A])
            y = np.concatenate([qy, y])
        Q, R = np.linalg.qr(A)
        qy = Q.T @ y
    coef, info = solve_lsq(R, qy)
    cost2 = sum(float(np.sum((A @ coef - y) ** 2)) for A, y in _blocks(M, r1, r2, wts, Y))
    return coef, info, float(np.sqrt(cost2))


def full_matrix_cost(B, M, coef):
    """||B - F_M D F_M^*||_F against a dense matrix B."""
    M = _as_pairing(M)
    d = B.shape[0]
    lag = np.arange(d)
    col = M.design(lag) @ coef if M.n_pairs else np.zeros(d)
    from scipy.linalg import toeplitz
    return float(np.linalg.norm(B - toeplitz(col)))


def dense_matrix_optimum(B, M):
    M = _as_pairing(M)
    d = B.shape[0]
    lags = np.subtract.outer(np.arange(d), np.arange(d))
    A = M.design(lags).reshape(-1, M.n_pairs)
    coef, _ = solve_lsq(A, B.ravel())
    return coef, full_matrix_cost(B, M, coef)


def brute_force_toeplitz_fit(T, k, rng=None, r2=0, gamma=None, rows=None, pool=None):
    """Exhaustive search over sets of at most k conjugate pairs from a candidate pool.

    The pool defaults to the half-integer grid (2i+1)/(2d) plus the integer
    grid i/d, folded to [0, 1/2]. Every candidate is scored by the same
    weighted column regression; desk scale only.
    """
    d = T.d
    if d > BRUTE_CAP:
        raise ValueError(f"brute force refuses d={d} > {BRUTE_CAP}")
    if k == 0:
        return FourierToeplitz.empty(d)
    if pool is None:
        grid = np.concatenate([(2 * np.arange(d) + 1) / (2 * d), np.arange(d) / d])
        pool = np.unique(np.round(np.where(grid > 0.5, 1 - grid, grid), 15))
    n_sets = sum(_ncr(pool.size, j) for j in range(1, k + 1))
    if n_sets > 200_000:
        raise ValueError(f"search space {n_sets} over cap")
    rows = all_rows(d) if rows is None else rows
    gamma = 1.0 / (2 * d) if gamma is None else gamma
    col = T.col
    oracle = lambda j: col[j]
    best = (np.linalg.norm(weight_vector(d)[rows.rows] * rows.scale * col[rows.rows]), None, None)
    for size in range(1, k + 1):
        for combo in itertools.combinations(pool, size):
            reps = list(combo)
            for f in combo:
                for j in range(1, r2 + 1):
                    reps += [f + gamma * j, f - gamma * j]
            S = ConjugatePairing.from_reps(np.unique(canonical_freq(np.array(reps))))
            a, cost, _ = solve_weighted_column_regression(oracle, S, rows, d)
            if cost < best[0] - 1e-12:
                best = (cost, S, a)
    if best[1] is None:
        return FourierToeplitz.empty(d)
    return best[1].to_fourier(best[2], d)


def _ncr(n, r):
    from math import comb
    return comb(n, r)
