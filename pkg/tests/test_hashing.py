import numpy as np
import pytest

from toeplitz_sfft.core import SignalOracle, SparseSignal, wrap_dist
from toeplitz_sfft.filters import build_filter_g, build_filter_h, eval_g_freq, eval_h
from toeplitz_sfft.hashing import (
    BinAccessor,
    HashError,
    HashParams,
    hash_freq,
    hash_to_bins,
    outer_split,
    sample_hash_params,
    sigma_range,
)


def dense_bins(x, H, G, p, tau):
    """Frequency-domain oracle for every bucket at time tau.

    W = x H is supported on [0, d), so the product of its DTFT with the
    dilated filter response is a trig polynomial; a long enough FFT grid
    integrates it exactly.
    """
    d = x.size
    W = x * eval_h(H, np.arange(d))
    span = d + 2 * p.sigma * G.time_support + 1
    N = 1 << int(np.ceil(np.log2(span + abs(tau) + 1)))
    xi = np.arange(N) / N
    What = np.fft.fft(W, N)
    out = np.empty(p.B, dtype=complex)
    for j in range(p.B):
        resp = eval_g_freq(G, (p.sigma * (xi - p.b) - j / p.B) % 1.0)
        out[j] = np.mean(What * resp * np.exp(2j * np.pi * xi * tau))
    return out


def random_sparse(d, k, rng):
    return SparseSignal(rng.random(k), rng.standard_normal(k) + 1j * rng.standard_normal(k), d).samples()


@pytest.mark.parametrize("sigma,f,want", [(1, 0.3, 1), (1, 0.95, 0), (3, 0.3, 0)])
def test_hash_freq_examples(sigma, f, want):
    assert hash_freq(HashParams(sigma, 0.0, 4), f) == want


def test_hash_freq_rounds_half_up():
    assert hash_freq(HashParams(1, 0.0, 4), 0.125) == 1


def test_hash_params_validation():
    with pytest.raises(HashError):
        HashParams(0, 0.1, 4)
    with pytest.raises(HashError):
        HashParams(2, 1.5, 4)


def test_sigma_draws_uniform():
    rng = np.random.default_rng(0)
    Delta = 1 / 204800
    assert sigma_range(16, 2, Delta) == (32, 64)
    draws = [sample_hash_params(16, 2, Delta, rng) for _ in range(10_000)]
    sig = np.array([p.sigma for p in draws])
    freq = np.bincount(sig, minlength=65)[32:65] / sig.size
    assert np.all(np.abs(freq - 1 / 33) <= 0.01)
    assert all(0 <= p.b <= 1 / p.sigma for p in draws)


def test_sigma_range_too_small_instance():
    with pytest.raises(HashError, match="larger d"):
        sample_hash_params(16, 2, 1 / 2048, np.random.default_rng(0))


def test_no_collision_band_exhaustive():
    B, k, lo = 8, 1, 16
    Delta = 1 / (200 * B * k * lo)
    s_lo, s_hi = sigma_range(B, k, Delta)
    rng = np.random.default_rng(1)
    gap_lo, gap_hi = 200 * k * Delta, 200 * (B / 2 - 0.5) * k * Delta
    f1 = rng.random(200)
    gap = gap_lo + rng.random(200) * (gap_hi - gap_lo)
    f2 = (f1 + gap) % 1.0
    for s in range(s_lo, s_hi + 1):
        for b in (0.0, rng.random() / s):
            p = HashParams(s, b, B)
            assert np.all(hash_freq(p, f1) != hash_freq(p, f2))


@pytest.fixture(scope="module")
def setup512():
    d = 512
    H = build_filter_h(3, 1e-2, d, s1=24)
    G = build_filter_g(8, 0.5, 1e-3, 3)
    return d, H, G


def test_hash_to_bins_matches_dense_oracle(setup512):
    d, H, G = setup512
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = random_sparse(d, 3, rng)
        p = HashParams(int(rng.integers(1, 4)), float(rng.random() / 3), G.B)
        alpha = int(rng.integers(0, d // p.sigma))
        got = hash_to_bins(SignalOracle.from_array(x), H, G, p, alpha)
        want = dense_bins(x, H, G, p, p.sigma * alpha)
        assert np.linalg.norm(got - want) <= 1e-6 * np.linalg.norm(want)


def test_hash_to_bins_zero_and_linearity(setup512):
    d, H, G = setup512
    p = HashParams(2, 0.1, G.B)
    zero = hash_to_bins(SignalOracle.from_array(np.zeros(d)), H, G, p, 100)
    assert np.all(zero == 0)
    rng = np.random.default_rng(3)
    x1, x2 = random_sparse(d, 2, rng), random_sparse(d, 3, rng)
    u = [hash_to_bins(SignalOracle.from_array(x), H, G, p, 100) for x in (x1, x2, x1 + x2)]
    assert np.allclose(u[0] + u[1], u[2], atol=1e-9 * np.abs(u[2]).max())


def test_hash_to_bins_read_accounting(setup512):
    d, H, G = setup512
    p = HashParams(1, 0.0, G.B)
    x = SignalOracle.from_array(np.ones(d))
    hash_to_bins(x, H, G, p, d // 2)
    assert x.reads <= 2 * G.B * G.folds + 1
    acc = BinAccessor(x.read, G, p, H=H)
    pts = acc.sample_points(d // 2)
    assert np.unique(pts).size == pts.size


def test_single_tone_lands_in_its_bucket(setup512):
    d, H, G = setup512
    B = G.B
    f0 = 0.3
    b = (f0 - 3 / B) % 1.0  # f0 sits at the centre of bucket 3
    p = HashParams(1, b, B)
    x = np.exp(2j * np.pi * f0 * np.arange(d))
    tau = d // 2
    u = hash_to_bins(SignalOracle.from_array(x), H, G, p, tau)
    ref = abs(x[tau] * eval_h(H, tau))
    eps = G.delta / G.k
    assert abs(u[3]) >= (1 - eps) * ref * (1 - 1e-3)
    far = [j for j in range(B) if min((j - 3) % B, (3 - j) % B) >= 2]
    assert np.abs(u[far]).max() <= 2 * eps * ref


def test_outer_split_isolates_a_tone(setup512):
    d, H, G = setup512
    rng = np.random.default_rng(4)
    x = SignalOracle.from_array(np.exp(2j * np.pi * 0.41 * np.arange(d)))
    insts, p = outer_split(x, G.B, rng, H=H, G=G, delta=1e-3, k=3)
    taus = np.arange(d // 4, 3 * d // 4, 7)
    energy = np.array([np.sum(np.abs(inst.read(taus)) ** 2) for inst in insts])
    home = [j for j, inst in enumerate(insts) if inst.contains(0.41)]
    assert len(home) >= 1
    hot = np.flatnonzero(energy > 2 * G.delta / G.k * energy.sum())
    for j in hot:
        assert any(min((j - h) % G.B, (h - j) % G.B) <= 1 for h in home)


def test_outer_split_zero_signal(setup512):
    d, H, G = setup512
    insts, _ = outer_split(SignalOracle.from_array(np.zeros(d)), G.B, np.random.default_rng(5), H=H, G=G)
    assert all(np.all(inst.read(np.arange(0, d, 50)) == 0) for inst in insts)


def test_outer_split_separates_distant_tones(setup512):
    d, H, G = setup512
    rng = np.random.default_rng(6)
    split = 0
    for _ in range(100):
        f1 = rng.random()
        f2 = (f1 + 0.2) % 1.0
        _, p = outer_split(SignalOracle.from_array(np.zeros(d)), G.B, rng, H=H, G=G)
        split += hash_freq(p, f1) != hash_freq(p, f2)
    assert split >= 90


def test_outer_intervals_tile_the_circle():
    insts, p = outer_split(SignalOracle.from_array(np.zeros(64)), 8, np.random.default_rng(7))
    f = np.random.default_rng(8).random(500)
    hits = np.array([[inst.contains(x) for inst in insts] for x in f])
    assert np.all(hits.sum(axis=1) >= 1)
    for x, row in zip(f, hits):
        assert row[hash_freq(p, x)]
        assert wrap_dist(x, (p.b + hash_freq(p, x) / 8) % 1.0) <= 1 / 16 + 1e-12
