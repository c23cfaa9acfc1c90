import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from gapscope.hamiltonian import PauliString, enumerate_observables
from gapscope.shadows import SnapshotRecord, SnapshotSet, estimate_observable
from gapscope.spectroscopy import (
    EmptySignalError,
    Spectrum,
    SpectroscopySettings,
    analyze,
    build_time_series,
    chi2_sf,
    default_lags,
    dominant_time_signals,
    find_gap_peaks,
    lagged_cross_correlation,
    ljung_box,
    spectral_function,
    standardize_and_filter,
    write_peaks_json,
)


@pytest.mark.parametrize("dof", [1, 2, 3, 5, 10, 17.5, 40])
def test_chi2_sf_matches_reference(dof):
    for x in [1e-6, 0.1, 0.9, dof, dof + 1, dof + 3, 2 * dof + 5, 80.0, 200.0]:
        assert chi2_sf(x, dof) == pytest.approx(scipy.stats.chi2.sf(x, dof), abs=1e-10)


def test_chi2_sf_edges():
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(-1.0, 3) == 1.0
    with pytest.raises(ValueError):
        chi2_sf(1.0, 0)


def test_ljung_box_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.stats.diagnostic")
    rng = np.random.default_rng(0)
    for n, lags in [(30, 5), (60, 10), (90, 10)]:
        row = rng.normal(size=n) + np.sin(np.arange(n) * 0.4)
        q, p = ljung_box(row, lags)
        ref = sm.acorr_ljungbox(row, lags=[lags])
        assert q == pytest.approx(float(ref["lb_stat"].iloc[0]), rel=1e-10)
        assert p == pytest.approx(float(ref["lb_pvalue"].iloc[0]), abs=1e-10)


def test_ljung_box_validation():
    with pytest.raises(ValueError):
        ljung_box(np.ones(20), 3)
    with pytest.raises(ValueError):
        ljung_box(np.arange(10.0), 10)


def test_ljung_box_calibrated_under_white_noise():
    rng = np.random.default_rng(1)
    pvals = np.array([ljung_box(rng.normal(size=60), 10)[1] for _ in range(1000)])
    ks = scipy.stats.kstest(pvals, "uniform").statistic
    assert ks < 0.1


def test_default_lags():
    assert default_lags(90) == 10
    assert default_lags(30) == 6
    assert default_lags(8) == 1


def test_standardize_invariants():
    rng = np.random.default_rng(2)
    raw = rng.normal(size=(20, 40)) * rng.uniform(0.1, 10, size=(20, 1)) + 5
    data = standardize_and_filter(raw, keep_fraction=1.0)
    assert len(data.rows) == 20
    assert np.all(np.abs(data.values.mean(axis=1)) < 1e-10)
    assert np.all(np.abs(data.values.std(axis=1) - 1) < 1e-10)
    assert data.standardized


def test_sinusoids_beat_noise():
    rng = np.random.default_rng(3)
    n_t = 60
    t = np.arange(n_t)
    sines = np.array([np.sin(0.5 * t + ph) for ph in rng.uniform(0, 6, size=5)])
    noise = rng.normal(size=(5, n_t))
    raw = np.vstack([noise[:2], sines, noise[2:]])
    data = standardize_and_filter(raw, keep_fraction=0.5)
    assert sorted(data.rows.tolist()) == [2, 3, 4, 5, 6]
    assert np.all(data.pvalues < 1e-6)


def test_constant_rows_dropped():
    raw = np.vstack([np.ones(20), np.sin(np.arange(20.0)), np.full(20, 3.0)])
    data = standardize_and_filter(raw, keep_fraction=1.0)
    assert data.rows.tolist() == [1]
    with pytest.raises(EmptySignalError):
        standardize_and_filter(np.ones((3, 20)))


def test_keep_fraction_rounds_up():
    rng = np.random.default_rng(4)
    raw = rng.normal(size=(21, 30))
    assert len(standardize_and_filter(raw, 0.1).rows) == 3
    with pytest.raises(ValueError):
        standardize_and_filter(raw[:, :7])


def test_rank_one_matrix():
    n_t = 40
    sig = np.sin(0.3 * np.arange(n_t) + 0.2)
    sig = (sig - sig.mean()) / sig.std()
    d = np.tile(sig, (7, 1))
    vecs, evals = dominant_time_signals(d, c=3)
    assert evals[0] == pytest.approx(7 * n_t)
    assert np.all(np.abs(evals[1:]) < 1e-9)
    unit = sig / np.linalg.norm(sig)
    assert abs(abs(vecs[0] @ unit) - 1) < 1e-12
    assert vecs[0][np.argmax(np.abs(vecs[0]))] > 0


def test_dominant_signal_is_right_singular_vector():
    rng = np.random.default_rng(5)
    d = rng.normal(size=(6, 30))
    vecs, evals = dominant_time_signals(d, c=4)
    _, s, vt = np.linalg.svd(d)
    assert np.allclose(evals, s[:4] ** 2)
    assert abs(abs(vecs[0] @ vt[0]) - 1) < 1e-10
    assert np.all(evals >= -1e-10)
    with pytest.raises(ValueError):
        dominant_time_signals(d, c=31)


def test_cross_correlation_definition():
    rng = np.random.default_rng(6)
    v = rng.normal(size=(2, 9))
    x = lagged_cross_correlation(v)
    assert x.shape == (8, 2, 2)
    for m in range(8):
        for k in range(2):
            for l in range(2):
                ref = sum(v[k, n + m] * v[l, n] for n in range(9 - m))
                assert x[m, k, l] == pytest.approx(ref, abs=1e-12)


def test_dft_matches_direct_sum():
    rng = np.random.default_rng(7)
    v = rng.normal(size=(3, 50))
    spec = spectral_function(v, 0.1, zero_pad=4)
    x = lagged_cross_correlation(v)
    l_pad = 200
    assert spec.l_pad == l_pad
    m = np.arange(x.shape[0])
    for b in [0, 1, 17, 60, 100]:
        phase = np.exp(-2j * math.pi * b * m / l_pad)
        direct = np.tensordot(phase, x, axes=(0, 0))
        lam = np.linalg.svd(direct, compute_uv=False)[0]
        assert spec.lambdas[b] == pytest.approx(lam, abs=1e-10)


def test_spectrum_grid():
    spec = spectral_function(np.ones((1, 20)), 0.05, zero_pad=4)
    assert spec.omegas[0] == 0
    assert np.allclose(np.diff(spec.omegas), 2 * math.pi / (80 * 0.05))
    assert spec.omegas[-1] == pytest.approx(math.pi / 0.05)
    assert len(spec.omegas) == len(spec.lambdas)
    assert spec.bin_width == pytest.approx(2 * math.pi / (80 * 0.05))


def test_zero_signals_give_zero_spectrum():
    spec = spectral_function(np.zeros((3, 16)), 0.1)
    assert np.all(spec.lambdas == 0)
    assert find_gap_peaks(spec) == []


def test_cosine_peak_within_half_bin():
    dt, n_t = 0.1, 60
    omega0 = 7.3
    v = np.cos(omega0 * np.arange(n_t) * dt)
    spec = spectral_function(v[None, :], dt)
    peaks = find_gap_peaks(spec)
    assert len(peaks) >= 1
    assert abs(peaks[0].omega - omega0) < 0.5 * spec.bin_width
    assert spec.peaks == peaks


def test_flat_spectrum_has_no_peaks():
    spec = Spectrum(np.linspace(0, 10, 50), np.ones(50), 0.1, 100)
    assert find_gap_peaks(spec) == []
    with pytest.raises(EmptySignalError):
        find_gap_peaks(Spectrum(np.arange(3.0), np.ones(3), 0.1, 4))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sign_flip_and_reorder_invariance(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(4, 24))
    base = spectral_function(v, 0.2).lambdas
    flipped = v * rng.choice([-1.0, 1.0], size=(4, 1))
    shuffled = flipped[rng.permutation(4)]
    assert np.allclose(spectral_function(shuffled, 0.2).lambdas, base, atol=1e-9)


@pytest.mark.parametrize("frac", [0.1, 0.35, 0.6, 0.85, 0.95])
def test_injected_gap_recovered_up_to_nyquist(frac):
    dt, n_t = 0.05, 80
    omega0 = frac * math.pi / dt
    rng = np.random.default_rng(8)
    t = np.arange(1, n_t + 1) * dt
    raw = np.vstack(
        [a * np.cos(omega0 * t + ph) + 0.2 for a, ph in zip(rng.uniform(0.5, 2, 6), rng.uniform(0, 6, 6))]
        + [rng.normal(size=n_t) for _ in range(30)]
    )
    _, spec = analyze(raw, dt, SpectroscopySettings(keep_fraction=0.2))
    unpadded_bin = 2 * math.pi / (n_t * dt)
    assert abs(spec.peaks[0].omega - omega0) < 0.5 * unpadded_bin


def test_scale_invariance():
    rng = np.random.default_rng(9)
    t = np.arange(1, 51) * 0.1
    raw = np.vstack([np.cos(4.0 * t + p) for p in rng.uniform(0, 6, 5)] + [rng.normal(size=50) for _ in range(15)])
    d1, s1 = analyze(raw, 0.1)
    d2, s2 = analyze(raw * 37.5, 0.1)
    assert np.allclose(d1.values, d2.values, atol=1e-10)
    assert np.allclose(s1.lambdas, s2.lambdas, atol=1e-8)
    assert [p.index for p in s1.peaks] == [p.index for p in s2.peaks]


def random_snapshots(n, n_t, per, seed):
    rng = np.random.default_rng(seed)
    recs = []
    for s in range(1, n_t + 1):
        for _ in range(per):
            recs.append(
                SnapshotRecord(
                    s,
                    float(rng.choice([-1.7, 1.7])),
                    "".join(rng.choice(list("XYZ"), size=n)),
                    "".join(rng.choice(list("01"), size=n)),
                )
            )
    return SnapshotSet.from_records(recs, {"n_t": n_t})


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_time_series_matches_per_observable_estimates(q):
    snaps = random_snapshots(4, 3, 40, q)
    obs = enumerate_observables(4, q)
    raw = build_time_series(snaps, obs)
    assert raw.shape == (len(obs), 3)
    for i in range(0, len(obs), max(1, len(obs) // 25)):
        for s in range(3):
            assert raw[i, s] == pytest.approx(estimate_observable(snaps.at_time(s + 1), obs[i]), abs=1e-10)


def test_time_series_single_record():
    snaps = SnapshotSet.from_records([SnapshotRecord(1, 2.0, "ZX", "10")], {"n_t": 1})
    obs = enumerate_observables(2, 1)
    raw = build_time_series(snaps, obs)
    i = obs.labels.index("ZI")
    assert raw[i, 0] == -6.0


def test_time_series_missing_point():
    snaps = random_snapshots(2, 3, 5, 0).select(np.arange(10))
    with pytest.raises(ValueError):
        build_time_series(snaps, enumerate_observables(2, 1), n_t=3)


def test_csv_and_json_output(tmp_path):
    spec = spectral_function(np.cos(np.arange(30) * 0.7)[None, :], 0.1)
    peaks = find_gap_peaks(spec)
    spec.write_csv(tmp_path / "s.csv")
    first = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert first == "omega,lambda"
    back = Spectrum.read_csv(tmp_path / "s.csv", 0.1, spec.l_pad)
    assert np.allclose(back.omegas, spec.omegas) and np.allclose(back.lambdas, spec.lambdas)
    write_peaks_json(peaks, tmp_path / "p.json")
    import json

    obj = json.loads((tmp_path / "p.json").read_text())
    assert set(obj[0]) == {"omega", "lambda"}
