"""Per-signal and pairwise statistics used by every feature family."""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

N_HIST_BINS = 16
N_MI_BINS = 8
LS_OVERSAMPLING = 4
DFA_MIN_LENGTH = 16
DFA_MIN_BOX = 4


class DescriptiveStats(NamedTuple):
    mean: float
    std: float
    Q1: float
    Q3: float
    IQR: float
    median: float
    mode: float
    range: float
    skew: float
    kurt: float
    MSE: float
    En: float
    MCR: float


def _checked(v, min_len, what):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{what}: expected a one-dimensional sequence")
    if len(arr) < min_len:
        raise ValueError(f"{what}: need at least {min_len} values, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite input")
    return arr


def quantile_sorted(s, p):
    """Linear interpolation at position p*(n-1) of an ascending array."""
    pos = p * (len(s) - 1)
    lo = int(math.floor(pos))
    frac = pos - lo
    if frac == 0.0 or lo + 1 >= len(s):
        return float(s[lo])
    return float(s[lo] + frac * (s[lo + 1] - s[lo]))


def bin_edges(lo, hi, n_bins):
    return lo + (hi - lo) * np.arange(n_bins + 1) / n_bins


def bin_index(v, lo, hi, n_bins):
    """Equal-width bin of each value over [lo, hi]; the last bin is closed.

    A degenerate range puts everything in bin 0.
    """
    if hi == lo:
        return np.zeros(len(v), dtype=np.intp)
    edges = bin_edges(lo, hi, n_bins)
    return np.searchsorted(edges[1:-1], v, side="right")


def _entropy_bits(counts):
    # correctly rounded sum so the value does not depend on summation order
    n = int(counts.sum())
    return -math.fsum(c / n * math.log2(c / n) for c in counts.tolist() if c) + 0.0


def descriptive_stats(v) -> DescriptiveStats:
    """Location, spread, shape, energy and histogram summaries of ``v``.

    Quantiles use linear interpolation; ``std`` has divisor n-1; ``kurt`` is
    excess kurtosis. ``mode`` and ``En`` come from a 16-bin equal-width
    histogram over [min, max] (mode = centre of the fullest bin, lowest wins).
    Zero-variance input gives 0 for std, skew and kurt.
    """
    v = _checked(v, 2, "descriptive_stats")
    n = len(v)
    s = np.sort(v)
    lo, hi = float(s[0]), float(s[-1])
    rng = hi - lo

    if rng == 0.0:
        mean = lo
        std = skew = kurt = 0.0
        dev = np.zeros(n)
    else:
        mean = float(np.mean(v))
        dev = v - mean
        m2 = float(np.mean(dev ** 2))
        std = math.sqrt(float(np.sum(dev ** 2)) / (n - 1))
        if m2 > 0.0:
            z = dev / math.sqrt(m2)  # standardize first; m2**1.5 can underflow
            skew = float(np.mean(z ** 3))
            kurt = float(np.mean(z ** 4)) - 3.0
        else:
            skew = kurt = 0.0

    q1 = quantile_sorted(s, 0.25)
    q3 = quantile_sorted(s, 0.75)
    med = quantile_sorted(s, 0.5)

    counts = np.bincount(bin_index(v, lo, hi, N_HIST_BINS), minlength=N_HIST_BINS)
    k = int(np.argmax(counts))
    if rng == 0.0:
        mode = lo
    else:
        edges = bin_edges(lo, hi, N_HIST_BINS)
        mode = float((edges[k] + edges[k + 1]) / 2)

    crossings = np.count_nonzero(dev[:-1] * dev[1:] < 0)

    return DescriptiveStats(
        mean=mean, std=std, Q1=q1, Q3=q3, IQR=q3 - q1, median=med, mode=mode,
        range=rng, skew=skew, kurt=kurt, MSE=float(np.mean(v * v)),
        En=_entropy_bits(counts), MCR=crossings / (n - 1),
    )


def mean_tkeo(v) -> float:
    """Mean Teager-Kaiser energy, v[n]^2 - v[n-1]*v[n+1], over interior samples."""
    v = _checked(v, 3, "mean_tkeo")
    psi = v[1:-1] ** 2 - v[:-2] * v[2:]
    return float(np.mean(psi))


def pearson(a, b) -> float:
    """Pearson correlation, defined as 0 when either side has zero variance."""
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        return 0.0
    r = float(np.dot(da, db)) / denom
    return max(-1.0, min(1.0, r))


def ar1(v) -> float:
    """Lag-1 autocorrelation (Pearson between v[:-1] and v[1:])."""
    v = _checked(v, 3, "ar1")
    return pearson(v[:-1], v[1:])


def dfa_box_sizes(n):
    """Box sizes for DFA on a series of length ``n``.

    Log-spaced integers from 4 to n // 4; at least two sizes are always
    returned (the upper end is raised to 5 for 16 <= n < 20).
    """
    top = max(n // 4, DFA_MIN_BOX + 1)
    if top - DFA_MIN_BOX + 1 <= 16:
        return np.arange(DFA_MIN_BOX, top + 1)
    sizes = np.unique(np.round(np.geomspace(DFA_MIN_BOX, top, 20)).astype(int))
    return sizes


def dfa_fluctuations(v, sizes):
    """RMS residual F(n) of per-box linear fits on the integrated profile."""
    profile = np.cumsum(v - v.mean())
    out = np.empty(len(sizes))
    for i, size in enumerate(sizes):
        n_boxes = len(profile) // size
        boxes = profile[: n_boxes * size].reshape(n_boxes, size)
        x = np.arange(size, dtype=np.float64)
        xc = x - x.mean()
        # closed-form least-squares line per box
        ym = boxes.mean(axis=1, keepdims=True)
        slope = (boxes - ym) @ xc / np.dot(xc, xc)
        resid = boxes - ym - slope[:, None] * xc
        out[i] = math.sqrt(float(np.mean(resid ** 2)))
    return out


def dfa(v) -> float:
    """Detrended fluctuation analysis scaling exponent (DFA-1).

    Returns 0 for input with no fluctuation at any scale.
    """
    v = _checked(v, DFA_MIN_LENGTH, "dfa")
    if np.ptp(v) == 0:
        return 0.0
    sizes = dfa_box_sizes(len(v))
    fl = dfa_fluctuations(v, sizes)
    ok = fl > 0
    if np.count_nonzero(ok) < 2:
        return 0.0
    lx = np.log(sizes[ok].astype(np.float64))
    ly = np.log(fl[ok])
    lxc = lx - lx.mean()
    return float(np.dot(lxc, ly - ly.mean()) / np.dot(lxc, lxc))


# --- Lomb-Scargle -------------------------------------------------------

def lomb_scargle_grid(t, f_max=None, oversampling=LS_OVERSAMPLING):
    """Frequency grid from 1/duration to ``f_max`` in steps of 1/(oversampling*duration).

    ``f_max`` defaults to half the mean sampling rate.
    """
    duration = float(t[-1] - t[0])
    if duration <= 0:
        raise ValueError("lomb_scargle: zero duration")
    if f_max is None:
        f_max = 0.5 * (len(t) - 1) / duration
    f_lo = 1.0 / duration
    df = 1.0 / (oversampling * duration)
    if not f_max >= f_lo:
        raise ValueError(f"lomb_scargle: f_max {f_max} below lowest grid frequency {f_lo}")
    nf = int(math.floor((f_max - f_lo) / df + 1e-9)) + 1
    return f_lo, df, nf


@numba.njit(cache=True, nogil=True)
def _ls_power(t, Y, f_lo, df, nf):
    """Normalized periodogram of each row of ``Y`` (already mean-subtracted).

    Trig values are advanced between grid frequencies by rotation and
    re-evaluated directly every 128 steps to bound drift.
    """
    k, n = Y.shape
    P = np.zeros((k, nf))
    var = np.zeros(k)
    for a in range(k):
        acc = 0.0
        for i in range(n):
            acc += Y[a, i] * Y[a, i]
        var[a] = acc / (n - 1)
    two_pi = 2.0 * np.pi
    c = np.empty(n)
    s = np.empty(n)
    cd = np.empty(n)
    sd = np.empty(n)
    for i in range(n):
        cd[i] = np.cos(two_pi * df * t[i])
        sd[i] = np.sin(two_pi * df * t[i])
    yc = np.zeros(k)
    ys = np.zeros(k)
    for j in range(nf):
        if j % 128 == 0:
            w = two_pi * (f_lo + j * df)
            for i in range(n):
                c[i] = np.cos(w * t[i])
                s[i] = np.sin(w * t[i])
        else:
            for i in range(n):
                cn = c[i] * cd[i] - s[i] * sd[i]
                s[i] = s[i] * cd[i] + c[i] * sd[i]
                c[i] = cn
        s2 = 0.0
        c2 = 0.0
        for i in range(n):
            s2 += 2.0 * s[i] * c[i]
            c2 += c[i] * c[i] - s[i] * s[i]
        half = 0.5 * np.arctan2(s2, c2)
        ct = np.cos(half)
        st = np.sin(half)
        cc = 0.0
        ss = 0.0
        for a in range(k):
            yc[a] = 0.0
            ys[a] = 0.0
        for i in range(n):
            cs = c[i] * ct + s[i] * st
            sn = s[i] * ct - c[i] * st
            cc += cs * cs
            ss += sn * sn
            for a in range(k):
                yc[a] += Y[a, i] * cs
                ys[a] += Y[a, i] * sn
        tiny = 1e-12 * n
        for a in range(k):
            if var[a] == 0.0:
                continue
            p = 0.0
            if cc > tiny:
                p += yc[a] * yc[a] / cc
            if ss > tiny:
                p += ys[a] * ys[a] / ss
            P[a, j] = p / (2.0 * var[a])
    return P


def _ls_inputs(t, v, min_len):
    t = _checked(t, min_len, "lomb_scargle")
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if v.shape[1] != len(t):
        raise ValueError("lomb_scargle: t and v lengths differ")
    if not np.all(np.isfinite(v)):
        raise ValueError("lomb_scargle: non-finite input")
    if np.any(np.diff(t) <= 0):
        raise ValueError("lomb_scargle: timestamps must be strictly increasing")
    Y = v - v.mean(axis=1, keepdims=True)
    # exact constants must give exactly zero power
    Y[np.ptp(v, axis=1) == 0] = 0.0
    return t - t[0], np.ascontiguousarray(Y)


def lomb_scargle_power(t, v, f_max=None, oversampling=LS_OVERSAMPLING):
    """Return ``(freqs, power)``; ``v`` may be one series or a stack of rows."""
    tt, Y = _ls_inputs(t, v, 2)
    f_lo, df, nf = lomb_scargle_grid(tt, f_max, oversampling)
    power = _ls_power(tt, Y, f_lo, df, nf)
    freqs = f_lo + df * np.arange(nf)
    return freqs, (power[0] if np.ndim(v) == 1 else power)


def lomb_scargle_peaks(t, V, f_max=None, oversampling=LS_OVERSAMPLING):
    """Dominant frequency and its power for each row of ``V`` (shared timestamps)."""
    tt, Y = _ls_inputs(t, V, DFA_MIN_LENGTH)
    f_lo, df, nf = lomb_scargle_grid(tt, f_max, oversampling)
    power = _ls_power(tt, Y, f_lo, df, nf)
    k = np.argmax(power, axis=1)
    amp = power[np.arange(len(k)), k]
    dfc = np.where(amp > 0, f_lo + df * k, 0.0)
    return dfc, amp


def lomb_scargle_peak(t, v, f_max=None):
    """``(DFC, AMP)``: grid frequency of maximum normalized power and that power."""
    if np.ndim(v) != 1:
        raise ValueError("lomb_scargle_peak: expected a single series")
    dfc, amp = lomb_scargle_peaks(t, v, f_max)
    return float(dfc[0]), float(amp[0])


# --- pairwise -----------------------------------------------------------

class PairwiseStats(NamedTuple):
    XCORR: float
    MI: float
    xEn: float


def mutual_information(a, b, n_bins=N_MI_BINS):
    """Plug-in mutual information (bits) from an equal-width joint histogram,
    each axis binned over its own range."""
    ia = bin_index(a, a.min(), a.max(), n_bins)
    ib = bin_index(b, b.min(), b.max(), n_bins)
    joint = np.bincount(ia * n_bins + ib, minlength=n_bins * n_bins).reshape(n_bins, n_bins)
    pxy = joint / len(a)
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log2(pxy[nz] / np.outer(px, py)[nz])))
    return max(mi, 0.0)


def cross_entropy(a, b, n_bins=N_HIST_BINS):
    """-sum p_a log2 q_b over shared bins spanning both ranges; q_b add-one smoothed."""
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    ca = np.bincount(bin_index(a, lo, hi, n_bins), minlength=n_bins)
    cb = np.bincount(bin_index(b, lo, hi, n_bins), minlength=n_bins)
    p = ca / len(a)
    q = (cb + 1.0) / (len(b) + n_bins)
    return float(-np.sum(p * np.log2(q)))


def pairwise_features(a, b) -> PairwiseStats:
    a = _checked(a, DFA_MIN_LENGTH, "pairwise_features")
    b = _checked(b, DFA_MIN_LENGTH, "pairwise_features")
    if len(a) != len(b):
        raise ValueError("pairwise_features: unequal lengths")
    return PairwiseStats(XCORR=pearson(a, b), MI=mutual_information(a, b),
                         xEn=cross_entropy(a, b))
