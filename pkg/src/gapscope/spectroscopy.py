"""Classical post-processing: from snapshot time series to a gap spectrum.

Pipeline: estimate every observable at every time point, standardize each
row, keep the rows whose Ljung-Box statistic is most significant, take the
dominant eigenvectors of the time-time correlation matrix, and read gaps
off the largest singular value of their Fourier-transformed lagged
cross-correlations.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .hamiltonian import ObservableSet
from .shadows import SnapshotSet

__all__ = [
    "EmptySignalError",
    "DataMatrix",
    "Spectrum",
    "Peak",
    "build_time_series",
    "chi2_sf",
    "ljung_box",
    "standardize_and_filter",
    "dominant_time_signals",
    "spectral_function",
    "find_gap_peaks",
    "analyze",
]


class EmptySignalError(ValueError):
    """No usable signal survived filtering, or nothing left to search."""


@dataclass
class DataMatrix:
    rows: np.ndarray
    values: np.ndarray
    standardized: bool = True
    pvalues: np.ndarray | None = None
    q_stats: np.ndarray | None = None

    @property
    def n_t(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Peak:
    omega: float
    lam: float
    index: int

    def to_json_obj(self) -> dict:
        return {"omega": self.omega, "lambda": self.lam}


@dataclass
class Spectrum:
    omegas: np.ndarray
    lambdas: np.ndarray
    dt: float
    l_pad: int
    peaks: list = field(default_factory=list)

    @property
    def bin_width(self) -> float:
        return 2.0 * math.pi / (self.l_pad * self.dt)

    def value_at(self, omega: float) -> float:
        """lambda at the grid bin nearest ``omega``."""
        return float(self.lambdas[int(np.argmin(np.abs(self.omegas - omega)))])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["omega", "lambda"])
            for w, v in zip(self.omegas.tolist(), self.lambdas.tolist()):
                writer.writerow([repr(w), repr(v)])

    @classmethod
    def read_csv(cls, path, dt: float, l_pad: int) -> "Spectrum":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], dt, l_pad)


def write_peaks_json(peaks, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([p.to_json_obj() for p in peaks], fh, indent=1)


# --------------------------------------------------------------------------
# time series
# --------------------------------------------------------------------------


def _feature_matrix(snaps: SnapshotSet) -> np.ndarray:
    """Per-record values 3 (-1)^bit on the measured letter, 0 elsewhere; shape (R, n, 3)."""
    r, n = snaps.bases.shape
    feats = np.zeros((r, n, 3))
    signs = 3.0 * (1.0 - 2.0 * snaps.bits)
    rows, cols = np.indices((r, n))
    feats[rows, cols, snaps.bases] = signs
    return feats


def _letter_table(observables: ObservableSet):
    codes = {"X": 0, "Y": 1, "Z": 2}
    supports, letters = [], []
    for p in observables:
        sup = p.support
        supports.append(sup)
        letters.append(tuple(codes[p.letter(q)] for q in sup))
    return supports, letters


def _estimates_at_time(snaps: SnapshotSet, supports, letters, max_weight: int) -> np.ndarray:
    r, n = snaps.bases.shape
    feats = _feature_matrix(snaps).reshape(r, 3 * n)
    g = snaps.gamma / r
    out = np.empty(len(supports))
    if max_weight <= 3:
        m1 = g @ feats
        m2 = (feats * g[:, None]).T @ feats if max_weight >= 2 else None
        m3 = None
        if max_weight == 3:
            pair = (feats[:, :, None] * feats[:, None, :]).reshape(r, -1)
            m3 = ((pair * g[:, None]).T @ feats).reshape(3 * n, 3 * n, 3 * n)
        for i, (sup, let) in enumerate(zip(supports, letters)):
            idx = [3 * q + a for q, a in zip(sup, let)]
            if len(idx) == 1:
                out[i] = m1[idx[0]]
            elif len(idx) == 2:
                out[i] = m2[idx[0], idx[1]]
            elif len(idx) == 3:
                out[i] = m3[idx[0], idx[1], idx[2]]
            else:
                out[i] = snaps.gamma.mean()
        return out
    cube = feats.reshape(r, n, 3)
    for i, (sup, let) in enumerate(zip(supports, letters)):
        prod = np.array(g)
        for q, a in zip(sup, let):
            prod = prod * cube[:, q, a]
        out[i] = prod.sum()
    return out


def build_time_series(snapshots: SnapshotSet, observables: ObservableSet, n_t: int | None = None) -> np.ndarray:
    """Raw estimates S_i(s), shape (n_observables, n_t).

    Entry (i, s) equals ``estimate_observable`` of observable i on the
    records with time index s + 1; the work is organized as moment
    tensors of the per-record single-qubit features.
    """
    if n_t is None:
        n_t = int(snapshots.metadata.get("n_t") or snapshots.s.max())
    present = set(np.unique(snapshots.s).tolist())
    missing = [s for s in range(1, n_t + 1) if s not in present]
    if missing:
        raise ValueError(f"snapshot set is missing time points {missing[:10]}")
    supports, letters = _letter_table(observables)
    max_weight = max((len(s) for s in supports), default=0)
    out = np.empty((len(supports), n_t))
    order = np.argsort(snapshots.s, kind="stable")
    sorted_s = snapshots.s[order]
    bounds = np.searchsorted(sorted_s, np.arange(1, n_t + 2))
    for s in range(n_t):
        idx = order[bounds[s] : bounds[s + 1]]
        out[:, s] = _estimates_at_time(snapshots.select(idx), supports, letters, max_weight)
    return out


# --------------------------------------------------------------------------
# Ljung-Box
# --------------------------------------------------------------------------


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi2_sf(x: float, dof: float) -> float:
    """Chi-squared survival function via the regularized upper incomplete gamma."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    a, hx = 0.5 * dof, 0.5 * x
    if hx < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, hx))
    return _gamma_q_contfrac(a, hx)


def ljung_box(row: np.ndarray, lags: int) -> tuple[float, float]:
    """Ljung-Box Q = n (n + 2) sum_k r_k^2 / (n - k) and its chi-squared p-value."""
    x = np.asarray(row, dtype=float)
    n = x.size
    if not 1 <= lags < n:
        raise ValueError(f"lags={lags} must lie in [1, {n - 1}]")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        raise ValueError("constant series has no autocorrelation")
    r = np.array([xc[k:] @ xc[:-k] for k in range(1, lags + 1)]) / denom
    q = n * (n + 2) * float(np.sum(r * r / (n - np.arange(1, lags + 1))))
    return q, chi2_sf(q, lags)


def default_lags(n_t: int) -> int:
    return max(1, min(10, n_t // 5))


def standardize_and_filter(
    raw: np.ndarray,
    keep_fraction: float = 0.10,
    lb_lags: int | None = None,
    row_ids=None,
) -> DataMatrix:
    """Drop flat rows, standardize, keep the most significant Ljung-Box rows.

    Rows are ranked by ascending p-value (ties broken by larger Q, then by
    row order) and the top ceil(keep_fraction * rows) are returned in
    their original order.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    n_rows, n_t = raw.shape
    if n_t < 8:
        raise ValueError(f"need at least 8 time points, got {n_t}")
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    lags = default_lags(n_t) if lb_lags is None else int(lb_lags)
    ids = np.arange(n_rows) if row_ids is None else np.asarray(row_ids)
    mu = raw.mean(axis=1)
    sigma = raw.std(axis=1)
    live = sigma >= 1e-12
    if not live.any():
        raise EmptySignalError("every time series is constant")
    data = (raw[live] - mu[live, None]) / sigma[live, None]
    ids = ids[live]
    stats = [ljung_box(row, lags) for row in data]
    q = np.array([s[0] for s in stats])
    p = np.array([s[1] for s in stats])
    n_keep = math.ceil(keep_fraction * len(data) - 1e-9)
    rank = np.lexsort((np.arange(len(p)), -q, p))
    chosen = np.sort(rank[:n_keep])
    return DataMatrix(ids[chosen], data[chosen], True, p[chosen], q[chosen])


# --------------------------------------------------------------------------
# spectral function
# --------------------------------------------------------------------------


def dominant_time_signals(data: DataMatrix | np.ndarray, c: int = 5):
    """Top-c eigenvectors of the n_t x n_t correlation matrix D^T D.

    Returns ``(signals, eigenvalues)`` with ``signals`` of shape (c, n_t),
    ordered by descending eigenvalue, each signed so its largest-magnitude
    entry is positive.
    """
    values = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)
    n_t = values.shape[1]
    if not 1 <= c <= n_t:
        raise ValueError(f"c={c} must lie in [1, {n_t}]")
    gram = values.T @ values
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:c]
    vecs = evecs[:, order].T.copy()
    for v in vecs:
        k = int(np.argmax(np.abs(v)))
        if v[k] < 0:
            v *= -1.0
    return vecs, evals[order]


def lagged_cross_correlation(signals: np.ndarray) -> np.ndarray:
    """x[m, k, l] = sum_n v_k(n + m) v_l(n) for lags m = 0 .. n_t - 2."""
    v = np.atleast_2d(signals)
    c, n_t = v.shape
    out = np.empty((n_t - 1, c, c))
    for m in range(n_t - 1):
        out[m] = v[:, m:] @ v[:, : n_t - m].T
    return out


def spectral_function(signals, dt: float, zero_pad: int = 4) -> Spectrum:
    """lambda(omega): largest singular value of the DFT of the lagged cross-correlations."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = np.atleast_2d(np.asarray(signals, dtype=float))
    n_t = v.shape[1]
    l_pad = int(zero_pad) * n_t
    x = lagged_cross_correlation(v)
    spec = np.fft.fft(x, n=l_pad, axis=0)
    half = l_pad // 2 + 1
    spec = spec[:half]
    if spec.shape[1] == 1:
        lambdas = np.abs(spec[:, 0, 0])
    else:
        lambdas = np.linalg.svd(spec, compute_uv=False)[:, 0]
    omegas = 2.0 * math.pi * np.arange(half) / (l_pad * dt)
    return Spectrum(omegas, lambdas, dt, l_pad)


def find_gap_peaks(
    spectrum: Spectrum, dc_exclude_bins: int = 2, min_prominence_fraction: float = 0.2
) -> list[Peak]:
    """Prominent local maxima of lambda, strongest first, parabolic-refined."""
    lam = np.asarray(spectrum.lambdas, dtype=float)
    start = dc_exclude_bins + 1
    if start >= len(lam):
        raise EmptySignalError("no spectral bins left after DC exclusion")
    top = float(lam.max())
    if top <= 0.0:
        return []
    idx, _ = find_peaks(lam[start:], prominence=min_prominence_fraction * top)
    idx = idx + start
    peaks = []
    width = spectrum.omegas[1] - spectrum.omegas[0] if len(lam) > 1 else 0.0
    for k in idx:
        y0, y1, y2 = lam[k - 1], lam[k], lam[k + 1]
        curv = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / curv if curv != 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        peaks.append(Peak(float(spectrum.omegas[k] + shift * width), float(y1), int(k)))
    peaks.sort(key=lambda p: -p.lam)
    spectrum.peaks = peaks
    return peaks


@dataclass
class SpectroscopySettings:
    keep_fraction: float = 0.10
    lb_lags: int | None = None
    c: int = 5
    zero_pad: int = 4
    dc_exclude_bins: int = 2
    min_prominence_fraction: float = 0.2


def analyze(raw: np.ndarray, dt: float, settings: SpectroscopySettings | None = None):
    """Run filtering, signal extraction, spectrum and peak search on raw series."""
    st = settings or SpectroscopySettings()
    data = standardize_and_filter(raw, st.keep_fraction, st.lb_lags)
    c = min(st.c, data.values.shape[0], data.n_t)
    signals, _ = dominant_time_signals(data, c)
    spectrum = spectral_function(signals, dt, st.zero_pad)
    find_gap_peaks(spectrum, st.dc_exclude_bins, st.min_prominence_fraction)
    return data, spectrum
