"""Toeplitz covariance estimation from Gaussian vector samples.

The sample covariance ``X X^T`` (columns ``x_i / sqrt(s)``) is exposed as an
entry oracle; reading entry (i, j) touches coordinates i and j of every
sample, which is what the entry sample complexity (ESC) counts.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from math import ceil, sqrt

import numpy as np

from .core import EntryOracle, FourierToeplitz
from .oracle import to_dense
from .recovery import robust_lowrank

PSD_CLIP = 1e-10
C_VSC = 1.0


class NotPSD(ValueError):
    pass


class SampleSet:
    """s real samples of dimension d with per-sample read accounting.

    Every entry query reads the same coordinates from all samples, so one
    shared mask suffices; ``esc`` still reports a per-sample vector.
    """

    def __init__(self, data):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ValueError("samples must be an s x d array")
        self.data = data
        self._touched = np.zeros(data.shape[1], dtype=bool)

    @property
    def s(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    @property
    def vsc(self):
        return self.s

    @property
    def esc(self):
        return np.full(self.s, int(self._touched.sum()))

    def max_esc(self):
        return int(self._touched.sum())

    def reset_counts(self):
        self._touched[:] = False

    def entries(self, ii, jj):
        """(1/s) sum_k x_k[i] x_k[j] for equal-shape index arrays."""
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        if self.s == 0:
            raise ValueError("empty sample set")
        self._touched[ii] = True
        self._touched[jj] = True
        uniq, inv = np.unique(np.concatenate([ii.ravel(), jj.ravel()]), return_inverse=True)
        cols = self.data[:, uniq]
        a, b = inv[: ii.size], inv[ii.size:]
        out = np.einsum("ki,ki->i", cols[:, a], cols[:, b]) / self.s
        return out.reshape(ii.shape)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qq", self.d, self.s))
            fh.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            head = fh.read(16)
            if len(head) != 16:
                raise ValueError(f"{path}: truncated header")
            d, s = struct.unpack("<qq", head)
            body = fh.read()
        if len(body) != 8 * d * s:
            raise ValueError(f"{path}: expected {d * s} values, found {len(body) // 8}")
        return cls(np.frombuffer(body, dtype="<f8").reshape(s, d).copy())


def _dense_factor(T):
    A = to_dense(T)
    lam, V = np.linalg.eigh(A)
    tol = PSD_CLIP * max(np.abs(lam).max(initial=0.0), np.finfo(float).tiny)
    if lam.min(initial=0.0) < -tol:
        raise NotPSD(f"minimum eigenvalue {lam.min():.3g} below -{tol:.3g}")
    return V * np.sqrt(np.clip(lam, 0.0, None))


def sample_gaussian_toeplitz(T, s, rng):
    """s i.i.d. draws from N(0, T).

    A FourierToeplitz is sampled through its factors: sqrt(2) Re(F_S D^1/2 g)
    with g complex standard normal has covariance F_S D F_S^*. Anything else
    goes through a clipped eigendecomposition.
    """
    s = int(s)
    if s < 0:
        raise ValueError("s must be nonnegative")
    if isinstance(T, FourierToeplitz):
        if np.any(T.weights < 0):
            raise NotPSD("factored weights must be nonnegative")
        d = T.d
        g = (rng.standard_normal((s, T.freqs.size)) + 1j * rng.standard_normal((s, T.freqs.size))) / sqrt(2)
        F = np.exp(2j * np.pi * np.outer(np.arange(d), T.freqs))
        X = sqrt(2) * np.real((g * np.sqrt(T.weights)) @ F.T)
        return SampleSet(X)
    L = _dense_factor(T)
    return SampleSet(rng.standard_normal((s, L.shape[0])) @ L.T)


def sample_cov_entry(X: SampleSet, i, j):
    return float(X.entries(np.array([i]), np.array([j]))[0])


def default_sample_count(k, epsilon, C=C_VSC):
    return int(ceil(C * k**4 / epsilon**2))


def covariance_estimate(X: SampleSet, k, epsilon, cfg=None, rng=None):
    """Low-rank Toeplitz estimate of the covariance behind X.

    Runs the robust recovery on the sample-covariance oracle with
    delta = epsilon / sqrt(d), so delta ||T||_F <= epsilon ||T||_2.
    """
    if X.s < 1:
        raise ValueError("need at least one sample")
    d = X.d
    delta = epsilon / sqrt(d)
    oracle = EntryOracle(X.entries, d)
    rep = robust_lowrank(oracle, k, delta, cfg, rng)
    rep.meta.update({
        "epsilon": epsilon,
        "vsc": X.s,
        "esc": X.max_esc(),
        "pairs_touched": oracle.queries_used,
    })
    return rep


@dataclass
class ConcentrationReport:
    s: int
    k: int
    trials: int
    total: np.ndarray        # ||XX^T - T||_F
    off_proj: np.ndarray     # ||XX^T - P XX^T P||_F
    proj: np.ndarray         # ||P XX^T P - T_k||_F
    bound_tail: float        # sqrt(||T-T_k||_2 tr T + ||T-T_k||_F tr T / k)
    eps: float               # k^2 / sqrt(s)
    spectral: float

    @property
    def rhs(self):
        return self.bound_tail + self.eps * self.spectral

    def constants(self):
        """Empirical constant per measured norm: worst measured / rhs."""
        r = self.rhs
        if r == 0:
            return {"total": 0.0, "off_proj": 0.0, "proj": 0.0}
        return {"total": float(self.total.max() / r), "off_proj": float(self.off_proj.max() / r),
                "proj": float(self.proj.max() / r)}

    def median_rel(self):
        """Median ||XX^T - T||_F / ||T||_2 (0 for T = 0)."""
        return float(np.median(self.total) / self.spectral) if self.spectral > 0 else 0.0

    def to_json(self):
        return {"s": self.s, "k": self.k, "trials": self.trials, "total": self.total.tolist(),
                "off_proj": self.off_proj.tolist(), "proj": self.proj.tolist(),
                "bound_tail": self.bound_tail, "eps": self.eps, "spectral": self.spectral,
                "constants": self.constants(), "median_rel": self.median_rel()}


def concentration_check(T, k, s, trials, rng):
    """Monte-Carlo measurement of how fast the sample covariance concentrates."""
    A = to_dense(T)
    lam, V = np.linalg.eigh(A)
    order = np.argsort(-lam)
    lam, V = lam[order], V[:, order]
    P = V[:, :k] @ V[:, :k].T
    Tk = (V[:, :k] * lam[:k]) @ V[:, :k].T
    tail = lam[k:]
    tr = float(np.trace(A))
    bound_tail = sqrt(max(0.0, float(np.abs(tail).max(initial=0.0)) * tr
                          + float(np.linalg.norm(tail)) * tr / max(k, 1)))
    spectral = float(np.abs(lam).max(initial=0.0))
    total, off, proj = [], [], []
    for _ in range(trials):
        X = sample_gaussian_toeplitz(T, s, rng).data
        C = X.T @ X / s
        PCP = P @ C @ P
        total.append(np.linalg.norm(C - A))
        off.append(np.linalg.norm(C - PCP))
        proj.append(np.linalg.norm(PCP - Tk))
    return ConcentrationReport(int(s), int(k), int(trials), np.array(total), np.array(off),
                               np.array(proj), bound_tail, k**2 / sqrt(s), spectral)
