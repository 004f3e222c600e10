"""Dense brute-force helpers, for tests and desk-scale evaluation only.

Nothing on the sublinear path imports this module.
"""
import numpy as np
from scipy.linalg import toeplitz

from .core import FourierToeplitz, SymToeplitz

DENSE_CAP = 4096


class OracleTooLarge(ValueError):
    pass


def _check(d, cap=DENSE_CAP):
    if d > cap:
        raise OracleTooLarge(f"dense oracle refuses d={d} > {cap}")


def to_dense(T, cap=DENSE_CAP):
    if isinstance(T, FourierToeplitz):
        T = T.to_symtoeplitz()
    if isinstance(T, SymToeplitz):
        _check(T.d, cap)
        return toeplitz(T.col)
    A = np.asarray(T, dtype=float)
    _check(A.shape[0], cap)
    return A


def best_rank_k(T, k, cap=DENSE_CAP):
    """Projection of T onto its top-k eigenvectors (by |eigenvalue|) and the tail error."""
    A = to_dense(T, cap)
    if k < 0 or k > A.shape[0]:
        raise ValueError("k out of range")
    lam, V = np.linalg.eigh(A)
    order = np.argsort(-np.abs(lam))
    lam, V = lam[order], V[:, order]
    Tk = (V[:, :k] * lam[:k]) @ V[:, :k].T
    err = float(np.sqrt(np.sum(lam[k:] ** 2)))
    return Tk, err


def psd_project(col, iters=50):
    """Nearest-ish PSD symmetric Toeplitz matrix to toeplitz(col).

    Alternates eigenvalue clipping with diagonal averaging until the
    minimum eigenvalue is within 1e-8 of the spectral norm.
    """
    col = np.asarray(col, dtype=float).copy()
    d = col.size
    _check(d)
    idx = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    counts = np.bincount(idx.ravel(), minlength=d)
    for _ in range(iters):
        A = toeplitz(col)
        lam, V = np.linalg.eigh(A)
        scale = max(np.abs(lam).max(), np.finfo(float).tiny)
        if lam.min() >= -1e-9 * scale:
            break
        A = (V * np.clip(lam, 0, None)) @ V.T
        col = np.bincount(idx.ravel(), weights=A.ravel(), minlength=d) / counts
    else:
        # averaging alone stalls near the boundary; a diagonal shift is exact
        lam_min = np.linalg.eigvalsh(toeplitz(col)).min()
        if lam_min < 0:
            col[0] -= lam_min
    return SymToeplitz(col)


def frob_error(T, T_hat):
    """||T - T_hat||_F for two Toeplitz-like objects via their first columns."""
    a = T.first_column() if isinstance(T, FourierToeplitz) else T.col
    b = T_hat.first_column() if isinstance(T_hat, FourierToeplitz) else T_hat.col
    return SymToeplitz(a - b).frob_norm()


def random_psd_toeplitz(d, rng, n_freqs=None):
    """Random PSD Toeplitz matrix built from a nonnegative mixture of tones."""
    n_freqs = n_freqs or max(2, d // 4)
    f = rng.random(n_freqs)
    a = rng.exponential(size=n_freqs)
    F = FourierToeplitz(np.concatenate([f, 1 - f]) % 1.0, np.concatenate([a, a]), d, check=False)
    col = F.lag_values(np.arange(d)).real
    col[0] += 1e-3 * rng.random() * col[0]
    return SymToeplitz(col)
