import numpy as np
import pytest

from toeplitz_sfft.core import SignalOracle, SparseSignal, wrap_dist
from toeplitz_sfft.sfft import (
    Cluster,
    EmptySignal,
    FrequencyList,
    NoConsensus,
    RecoveryConfig,
    circular_median,
    frequency_recovery_1cluster,
    locate1_inner,
    locate1_signal,
    one_good_sample,
    recover_bounded,
    sparse_recover,
)


def tone_cluster(f0, n, noise=0.0, rng=None, amp=1.0):
    t = np.arange(n)
    x = amp * np.exp(2j * np.pi * f0 * t)
    if noise:
        g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x = x + g * noise * np.linalg.norm(x) / np.linalg.norm(g)
    sig = SignalOracle.from_array(x)
    return Cluster(sig.read, n), x


def cfg_for(n, **kw):
    return RecoveryConfig(**{"k": 1, "delta": 1e-3, **kw}).resolved(n)


def test_one_good_sample_pure_tone():
    n = 4096
    z, x = tone_cluster(0.1, n)
    rng = np.random.default_rng(0)
    cfg = cfg_for(n)
    for _ in range(20):
        a = one_good_sample(z, cfg, rng, hi=n - 50)
        assert 0 <= a < n - 50
        assert abs(x[a + 50] - x[a] * np.exp(2j * np.pi * 0.1 * 50)) < 1e-9


def test_one_good_sample_empty():
    z = Cluster(lambda t: np.zeros(t.shape, complex), 256)
    with pytest.raises(EmptySignal):
        one_good_sample(z, cfg_for(256), np.random.default_rng(0))


def test_one_good_sample_noisy_bound():
    n = 4096
    rng = np.random.default_rng(1)
    f0 = 0.2371
    cfg = cfg_for(n)
    good = 0
    for _ in range(100):
        z, x = tone_cluster(f0, n, noise=0.01, rng=rng)
        beta = int(rng.integers(1, 200))
        a = one_good_sample(z, cfg, rng, hi=n - beta)
        lhs = abs(x[a + beta] - x[a] * np.exp(2j * np.pi * f0 * beta))
        good += lhs <= 0.08 * (abs(x[a]) + abs(x[a + beta]))
    assert good >= 85


def test_locate1_inner_true_cell_gets_every_vote():
    n = 8192
    cfg = cfg_for(n)
    t = cfg.t_ary
    center, width = 0.3, 0.05
    cells = center - width / 2 + (np.arange(1, t + 1) - 0.5) * width / t
    for q in (0, t // 2, t - 1):
        z, _ = tone_cluster(cells[q], n)
        got, votes, direct = locate1_inner(z, cfg, center, width, np.random.default_rng(q), return_votes=True)
        assert got == pytest.approx(cells[q])
        assert direct[q] == cfg.R_loc


def test_locate1_inner_far_cells_rarely_vote():
    n = 8192
    s = 1 / 64
    cfg = cfg_for(n, s_vote=s, R_loc=500)
    t = cfg.t_ary
    center, width = 0.61, 0.02
    cells = center - width / 2 + (np.arange(1, t + 1) - 0.5) * width / t
    z, _ = tone_cluster(cells[2], n)
    _, _, direct = locate1_inner(z, cfg, center, width, np.random.default_rng(3), return_votes=True)
    far = [q for q in range(t) if abs(q - 2) > 3]
    assert np.all(direct[far] / cfg.R_loc <= 15 * s)


def test_locate1_inner_noisy():
    n = 4096
    cfg = cfg_for(n)
    rng = np.random.default_rng(4)
    width = 0.04
    hits = 0
    for _ in range(100):
        f0 = 0.5 + (rng.random() - 0.5) * width
        z, _ = tone_cluster(f0, n, noise=0.01, rng=rng)
        try:
            c = locate1_inner(z, cfg, 0.5, width, rng)
        except NoConsensus:
            continue
        hits += wrap_dist(c, f0) <= 3 * width / cfg.t_ary
    assert hits >= 90


def test_locate1_signal_noiseless_and_endpoint():
    n = 4096
    cfg = cfg_for(n)
    rng = np.random.default_rng(5)
    for f0, interval in [(0.3071, (0.25, 0.375)), (0.25, (0.25, 0.375)), (0.95, (0.9375, 0.0625))]:
        z, _ = tone_cluster(f0, n)
        f, rad, degraded = locate1_signal(z, cfg, interval, rng)
        assert wrap_dist(f, f0) <= rad
        assert rad < 2 / n


def test_locate1_signal_noisy():
    n = 4096
    cfg = cfg_for(n)
    rng = np.random.default_rng(6)
    ok = 0
    for _ in range(100):
        f0 = 0.1 + 0.125 * rng.random()
        z, _ = tone_cluster(f0, n, noise=0.01, rng=rng)
        try:
            f, rad, _ = locate1_signal(z, cfg, (0.1, 0.225), rng)
        except NoConsensus:
            continue
        ok += wrap_dist(f, f0) <= max(rad, 1 / n)
    assert ok >= 90


def test_circular_median_wraps():
    vals = [0.95, 0.99, 0.03]
    m = circular_median(vals, 0.0)
    assert m == pytest.approx(0.99)
    m = circular_median([0.49, 0.51, 0.5], 0.5)
    assert m == pytest.approx(0.5)


def test_median_ignores_a_minority_of_bad_runs():
    good = [0.3001, 0.2999, 0.3000, 0.3002, 0.2998, 0.3001, 0.3]
    bad = [0.25] * 3
    assert abs(circular_median(good + bad, 0.3) - 0.3) < 2e-4


def test_frequency_recovery_noisy_k4():
    n = 4096
    cfg = cfg_for(n, k=4)
    assert cfg.R_median == 9
    rng = np.random.default_rng(7)
    fails = 0
    for _ in range(50):
        f0 = 0.6 + 0.125 * rng.random()
        z, _ = tone_cluster(f0, n, noise=0.01, rng=rng)
        try:
            f, rad, _ = frequency_recovery_1cluster(z, cfg, (0.6, 0.725), rng)
            fails += wrap_dist(f, f0) > max(rad, 1 / n)
        except NoConsensus:
            fails += 1
    assert fails <= 1


def test_recover_bounded_single_tone():
    n = 4096
    cfg = cfg_for(n, k=2)
    x = SparseSignal([0.4123], [1.0], n)
    read = lambda t: x.eval(t) * ((t >= 0) & (t < n))
    freqs, radii, flags, energy = recover_bounded(read, (0.375, 0.5), cfg, np.random.default_rng(8), n, stretch_min=4)
    hit = [wrap_dist(f, 0.4123) <= r for f, r, fl in zip(freqs, radii, flags) if fl == ""]
    assert any(hit)


def test_recover_bounded_empty_instance():
    n = 1024
    cfg = cfg_for(n)
    out = recover_bounded(lambda t: np.zeros(t.shape, complex), (0.0, 0.25), cfg, np.random.default_rng(0), n)
    freqs, radii, flags, energy = out
    assert all(fl != "" for fl in flags)


def test_recover_bounded_three_tones():
    n, k = 8192, 3
    cfg = cfg_for(n, k=k)
    ok = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        c0 = rng.random()
        while True:
            f = (c0 + (rng.random(k) - 0.5) / 8 * 0.9) % 1
            if min(wrap_dist(f[i], f[j]) for i in range(k) for j in range(i)) >= 0.025:
                break
        x = SparseSignal(f, np.exp(2j * np.pi * rng.random(k)), n)
        read = lambda t: x.eval(t) * ((t >= 0) & (t < n))
        fr, rad, fl, _ = recover_bounded(read, ((c0 - 1 / 16) % 1, (c0 + 1 / 16) % 1), cfg,
                                         np.random.default_rng(seed + 100), n, stretch_min=8)
        fr, rad = np.array(fr), np.array(rad)
        ok += all(np.any(wrap_dist(fr, ff) <= rad) for ff in f)
    assert ok >= 17


def _planted(d, f, rng, noise=0.0):
    a = np.exp(2j * np.pi * rng.random(len(f))) * (1 + rng.random(len(f)))
    s = SparseSignal(f, a, d).samples()
    if noise:
        g = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        s = s + g * np.sqrt(noise * np.sum(np.abs(s) ** 2) / np.sum(np.abs(g) ** 2))
    return s


def test_sparse_recover_single_tone_anywhere():
    d = 2048
    ok = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        f0 = rng.random()
        L = sparse_recover(_planted(d, [f0], rng), RecoveryConfig(k=1, delta=1e-3), np.random.default_rng(seed))
        g = L.good()
        ok += bool(g.size) and wrap_dist(g, f0).min() <= L.window
    assert ok >= 45


def test_sparse_recover_zero_signal():
    L = sparse_recover(np.zeros(1024), RecoveryConfig(k=2, delta=1e-3), np.random.default_rng(0))
    assert L.good().size == 0


def test_sparse_recover_list_cap_and_json():
    rng = np.random.default_rng(9)
    cfg = RecoveryConfig(k=2, delta=1e-2)
    L = sparse_recover(_planted(2048, [0.1, 0.6], rng), cfg, rng)
    assert len(L) <= cfg.list_cap
    js = L.to_json()
    assert set(js) >= {"freqs", "window", "flags", "reads"}
    assert L.window > 0


def test_sparse_recover_is_deterministic():
    x = _planted(2048, [0.21, 0.77], np.random.default_rng(10), noise=0.01)
    a = sparse_recover(x, RecoveryConfig(k=2), np.random.default_rng(11))
    b = sparse_recover(x, RecoveryConfig(k=2), np.random.default_rng(11))
    assert np.array_equal(a.freqs, b.freqs) and a.reads == b.reads


def test_merged_lists_keep_provenance():
    a = FrequencyList(np.array([0.1]), np.array([0.01]), [""], np.array([1.0]), 0.01, ["outer"])
    b = FrequencyList(np.array([0.2]), np.array([0.02]), [""], np.array([1.0]), 0.02)
    m = a.merged(b)
    assert m.freqs.tolist() == [0.1, 0.2] and m.window == 0.02 and m.provenance == ["outer", "refine"]


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        RecoveryConfig.from_dict({"k": 1, "bogus": 2})
    with pytest.raises(ValueError):
        RecoveryConfig(k=0)
