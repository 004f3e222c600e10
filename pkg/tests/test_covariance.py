import numpy as np
import pytest
from scipy.linalg import toeplitz

from toeplitz_sfft.core import FourierToeplitz, SymToeplitz
from toeplitz_sfft.covariance import (
    NotPSD,
    SampleSet,
    concentration_check,
    covariance_estimate,
    default_sample_count,
    sample_cov_entry,
    sample_gaussian_toeplitz,
)
from toeplitz_sfft.oracle import frob_error


def test_identity_samples_have_unit_variance():
    X = sample_gaussian_toeplitz(SymToeplitz(np.eye(8)[0]), 20_000, np.random.default_rng(0))
    assert np.allclose(X.data.var(axis=0), 1, atol=0.05)


def test_rank2_samples_live_in_the_span():
    d = 32
    F = FourierToeplitz.closed([0.15], [1.0], d)
    X = sample_gaussian_toeplitz(F, 50, np.random.default_rng(1)).data
    assert np.linalg.matrix_rank(X, tol=1e-8 * np.abs(X).max()) == 2
    B = np.stack([np.cos(2 * np.pi * 0.15 * np.arange(d)), np.sin(2 * np.pi * 0.15 * np.arange(d))], 1)
    coef = np.linalg.lstsq(B, X.T, rcond=None)[0]
    assert np.allclose(B @ coef, X.T, atol=1e-9)


def test_factored_and_dense_sampling_agree_in_moments():
    d = 16
    F = FourierToeplitz.closed([0.0, 0.2], [1.0, 0.5], d)
    A = toeplitz(F.first_column())
    for T in (F, F.to_symtoeplitz()):
        X = sample_gaussian_toeplitz(T, 40_000, np.random.default_rng(2)).data
        assert np.abs(X.T @ X / X.shape[0] - A).max() <= 0.05 * np.abs(A).max()


def test_non_psd_input_is_rejected():
    with pytest.raises(NotPSD):
        sample_gaussian_toeplitz(SymToeplitz(np.array([0.0, 1.0, 0.0])), 10, np.random.default_rng(0))


def test_sample_entries_are_symmetric_and_match_dense():
    X = SampleSet(np.random.default_rng(3).standard_normal((7, 5)))
    C = X.data.T @ X.data / 7
    assert sample_cov_entry(X, 1, 3) == pytest.approx(sample_cov_entry(X, 3, 1))
    ii, jj = np.meshgrid(np.arange(5), np.arange(5), indexing="ij")
    assert np.allclose(X.entries(ii, jj), C)


def test_empty_sample_set_errors():
    X = SampleSet(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        X.entries(np.array([0]), np.array([1]))
    with pytest.raises(ValueError):
        covariance_estimate(X, 1, 0.1)


def test_esc_counts_touched_coordinates():
    X = SampleSet(np.ones((4, 10)))
    X.entries(np.array([0, 2]), np.array([5, 5]))
    assert X.max_esc() == 3
    assert X.esc.tolist() == [3] * 4
    X.reset_counts()
    assert X.max_esc() == 0


def test_sample_file_roundtrip(tmp_path):
    X = SampleSet(np.random.default_rng(4).standard_normal((3, 6)))
    X.save(tmp_path / "x.bin")
    Y = SampleSet.load(tmp_path / "x.bin")
    assert np.array_equal(X.data, Y.data)
    (tmp_path / "bad.bin").write_bytes(b"\x01\x00")
    with pytest.raises(ValueError, match="truncated"):
        SampleSet.load(tmp_path / "bad.bin")


def test_default_sample_count():
    assert default_sample_count(2, 0.5) == 64
    assert default_sample_count(1, 0.1) == 100


def test_estimate_improves_with_samples():
    d = 256
    F = FourierToeplitz.closed([0.0, 0.31], [1.0, 0.8], d)
    errs = []
    for s in (200, 3200):
        e = []
        for seed in range(5):
            X = sample_gaussian_toeplitz(F, s, np.random.default_rng(seed))
            R = covariance_estimate(X, 3, 0.1, rng=seed)
            e.append(frob_error(F, R.output) / F.to_symtoeplitz().frob_norm())
            assert R.meta["esc"] <= 2 * R.meta["pairs_touched"]
            assert R.meta["vsc"] == s
        errs.append(np.median(e))
    assert errs[1] < errs[0]


def test_esc_does_not_depend_on_sample_count():
    d = 256
    F = FourierToeplitz.closed([0.0, 0.2], [1.0, 1.0], d)
    escs = set()
    for s in (100, 1000):
        X = sample_gaussian_toeplitz(F, s, np.random.default_rng(5))
        escs.add(covariance_estimate(X, 3, 0.1, rng=6).meta["esc"])
    assert len(escs) == 1


def test_concentration_of_zero_matrix():
    r = concentration_check(SymToeplitz(np.zeros(8)), 1, 10, 3, np.random.default_rng(0))
    assert np.all(r.total == 0)
    assert r.median_rel() == 0.0
    assert r.constants() == {"total": 0.0, "off_proj": 0.0, "proj": 0.0}


def test_concentration_rate_is_inverse_sqrt():
    F = FourierToeplitz.closed([0.0, 0.2], [1.0, 1.0], 64)
    rates = [concentration_check(F, 3, s, 8, np.random.default_rng(7)).median_rel() * np.sqrt(s)
             for s in (250, 4000)]
    assert max(rates) / min(rates) <= 2
    js = concentration_check(F, 3, 100, 2, np.random.default_rng(8)).to_json()
    assert set(js["constants"]) == {"total", "off_proj", "proj"}


def test_single_sample_entry():
    x = np.zeros((1, 4))
    x[0, 0] = 3.0
    assert sample_cov_entry(SampleSet(x), 0, 0) == 9.0


def test_entries_concentrate_around_t():
    d, s = 64, 5000
    F = FourierToeplitz.closed([0.0, 0.13], [1.0, 0.7], d)
    A = toeplitz(F.first_column())
    spec = np.abs(np.linalg.eigvalsh(A)).max()
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    for seed in range(20):
        X = sample_gaussian_toeplitz(F, s, np.random.default_rng(seed))
        assert np.abs(X.entries(ii, jj) - A).max() <= 5 * spec / np.sqrt(s)


def test_delta_translation_holds_on_report():
    d, eps = 128, 0.2
    F = FourierToeplitz.closed([0.0, 0.25], [1.0, 1.0], d)
    X = sample_gaussian_toeplitz(F, 300, np.random.default_rng(9))
    R = covariance_estimate(X, 3, eps, rng=10)
    A = toeplitz(F.first_column())
    assert R.meta["delta"] * np.linalg.norm(A) <= eps * np.abs(np.linalg.eigvalsh(A)).max() + 1e-12
