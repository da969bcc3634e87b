"""Delay embedding, SVD coordinates, and the forced linear model.

Covers:
  - Hankel layout: anti-diagonal structure at lag 1, the lag-s indexing
    rule, and segment bookkeeping
  - SVD: round trip, energy conservation, deterministic signs
  - rank rules: optimal hard threshold (noise floor, scale invariance,
    clamp) and the spectral-gap slow cut
  - forced linear coordinate model: reproducibility, forcing statistics
  - reconstruction: full-rank identity, low-rank smoothing
"""

import numpy as np
import pytest

from gridid import (
    HavokDecomposition,
    NumericsError,
    TimeSeries,
    fit_linear_forced,
    forcing,
    hankel,
    hard_threshold_rank,
    reconstruct,
    scale_gap_rank,
    svd_embedding,
)

DT = 1e-3


def tone(n=4000, f=10.0, dt=DT, phase=0.0):
    t = np.arange(n) * dt
    return TimeSeries(0.0, dt, np.cos(2 * np.pi * f * t + phase), label="v")


# ---------------------------------------------------------------------------
# hankel
# ---------------------------------------------------------------------------


def test_hankel_entries_constant_on_antidiagonals():
    ts = TimeSeries(0.0, DT, np.arange(50.0), label="v")
    emb = hankel(ts, delays=8)
    H = emb.entries
    for i in range(H.shape[0]):
        for j in range(H.shape[1]):
            # for lag 1 the entry depends only on i + j... up to orientation:
            # row 0 holds the newest sample, so the invariant axis is j - i
            assert H[i, j] == H[0, 0] + (j - i)


def test_hankel_indexing_rule_with_lag():
    x = np.arange(100.0)
    emb = hankel(TimeSeries(0.0, DT, x, label="v"), delays=5, lag=3)
    m = 5
    for i in range(m):
        for j in (0, 1, 7):
            assert emb.entries[i, j] == x[(m - 1 - i) * 3 + j]


def test_hankel_shapes_and_segments():
    emb = hankel(tone(n=1000), delays=100)
    assert emb.m == 100
    assert emb.k == 901
    assert emb.segments == (901,)
    multi = hankel([tone(n=300), tone(n=400)], delays=50)
    assert multi.segments == (251, 351)
    assert multi.k == 602


def test_hankel_too_short_record():
    with pytest.raises(ValueError):
        hankel(tone(n=80), delays=100)


# ---------------------------------------------------------------------------
# svd
# ---------------------------------------------------------------------------


def test_svd_round_trip():
    emb = hankel(tone(), delays=60)
    svd = svd_embedding(emb)
    H_back = (svd.modes * svd.sigma) @ svd.coords.T
    rel = np.linalg.norm(H_back - emb.entries) / np.linalg.norm(emb.entries)
    assert rel < 1e-10


def test_svd_energy_conservation():
    emb = hankel(tone(), delays=60)
    svd = svd_embedding(emb)
    assert np.sum(svd.sigma**2) == pytest.approx(np.linalg.norm(emb.entries, "fro") ** 2, rel=1e-8)


def test_svd_sign_convention_is_deterministic():
    emb = hankel(tone(), delays=60)
    a = svd_embedding(emb)
    b = svd_embedding(emb)
    assert a.modes.tobytes() == b.modes.tobytes()
    assert a.coords.tobytes() == b.coords.tobytes()
    # convention pins each mode's largest-magnitude entry positive
    lead = a.modes[np.argmax(np.abs(a.modes), axis=0), np.arange(a.modes.shape[1])]
    assert np.all(lead > 0)


def test_all_zero_spectrum_raises():
    with pytest.raises(NumericsError):
        hard_threshold_rank(np.zeros(20), 20, 200)


# ---------------------------------------------------------------------------
# rank rules
# ---------------------------------------------------------------------------


def test_hard_threshold_separates_signal_from_noise_floor():
    # two strong components over a flat 1e-3 floor: tau sits well above
    # the floor and below the components
    sigma = np.array([10.0, 4.0] + [1e-3] * 50)
    assert hard_threshold_rank(sigma, 52, 500) == 2


def test_hard_threshold_scale_invariance():
    rng = np.random.default_rng(3)
    sigma = np.sort(np.abs(rng.standard_normal(40)))[::-1]
    r = hard_threshold_rank(sigma, 40, 400)
    for c in (1e-9, 1e-3, 7.7, 1e12):
        assert hard_threshold_rank(sigma * c, 40, 400) == r


def test_hard_threshold_minimum_clamp():
    # single dominant value: the threshold would keep 1, the clamp keeps 2
    sigma = np.array([5.0, 1e-9, 1e-10])
    assert hard_threshold_rank(sigma, 3, 100) == 2
    assert hard_threshold_rank(sigma, 3, 100, min_rank=3) == 3


def test_scale_gap_rank_finds_first_wide_gap():
    sigma = np.array([8.0, 7.5, 1.2, 1.0, 0.2])
    # 7.5/1.2 = 6.25 >= 4 -> cut after the second value
    assert scale_gap_rank(sigma, r_max=5) == 2
    # with a stricter ratio no gap qualifies: everything is one scale
    assert scale_gap_rank(sigma, r_max=5, gap_ratio=10.0) == 5


# ---------------------------------------------------------------------------
# forced linear model
# ---------------------------------------------------------------------------


def test_fit_reproducible_r2(lorenz_x):
    emb = hankel(lorenz_x, delays=100)
    svd = svd_embedding(emb)
    m1 = fit_linear_forced(svd, 15)
    m2 = fit_linear_forced(svd, 15)
    assert np.allclose(m1.r2, m2.r2, rtol=0, atol=1e-10)
    assert m1.mean_r2 > 0.95


def test_forcing_is_sigma_scaled_last_coordinate(lorenz_x):
    emb = hankel(lorenz_x, delays=100)
    svd = svd_embedding(emb)
    model = fit_linear_forced(svd, 15)
    f = forcing(model)
    assert np.allclose(f.values, svd.sigma[14] * svd.coords[:, 14])


def test_forcing_of_chaotic_record_is_heavy_tailed(lorenz_x):
    model = HavokDecomposition(delays=100, rank=15).fit(lorenz_x)
    f = model.forcing().values
    mu = f.mean()
    kurt = np.mean((f - mu) ** 4) / np.mean((f - mu) ** 2) ** 2
    assert kurt > 3.0  # far above the Gaussian value in practice


def test_linear_tone_needs_no_forcing():
    # a pure tone is exactly rank 2: the 2-coordinate linear model fits
    # with R^2 ~ 1 and the "forcing" coordinate is noise-floor small
    emb = hankel(tone(n=4000), delays=60)
    svd = svd_embedding(emb)
    model = fit_linear_forced(svd, 3)
    assert model.mean_r2 > 0.999999
    assert svd.sigma[2] / svd.sigma[0] < 1e-10


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


def test_full_rank_reconstruction_is_identity():
    ts = tone(n=1500, f=17.0)
    emb = hankel(ts, delays=40)
    svd = svd_embedding(emb)
    back = reconstruct(svd, 40)
    assert back.t0 == ts.t0
    assert len(back) == len(ts)
    rel = np.linalg.norm(back.values - ts.values) / np.linalg.norm(ts.values)
    assert rel < 1e-8


def test_low_rank_reconstruction_denoises():
    rng = np.random.default_rng(11)
    clean = tone(n=6000, f=10.0)
    noisy = TimeSeries(0.0, DT, clean.values + 0.05 * rng.standard_normal(6000), label="v")
    emb = hankel(noisy, delays=80)
    svd = svd_embedding(emb)
    back = reconstruct(svd, 2)
    err_in = np.std(noisy.values - clean.values)
    err_out = np.std(back.values - clean.values)
    assert err_out < 0.2 * err_in


# ---------------------------------------------------------------------------
# estimator wrapper
# ---------------------------------------------------------------------------


def test_decomposition_estimator_round_trip(tmp_path, lorenz_x):
    est = HavokDecomposition(delays=100, rank=15).fit(lorenz_x)
    doc = est.to_dict()
    assert doc["rank"] == 15
    assert len(doc["A_row_major"]) == 14  # one row per modeled coordinate
    assert len(doc["B"]) == 14
    assert len(doc["r2_per_coordinate"]) == 14
    p = tmp_path / "havok.json"
    est.save(p)
    assert p.stat().st_size > 0


def test_decomposition_rank_defaults_to_hard_threshold(lorenz_x):
    est = HavokDecomposition(delays=100).fit(lorenz_x)
    emb = hankel(lorenz_x, delays=100)
    svd = svd_embedding(emb)
    assert est.rank_ == hard_threshold_rank(svd.sigma, emb.m, emb.k)
