"""Delay selection, minimal embedding dimension via Cao's method, and
construction of the K x M state matrix from a scalar series.

The delay tau comes from the autocorrelation 1/e rule (with fallbacks); the
dimension M from the saturation of the E1(d) curve.  Nearest neighbors inside
Cao's statistics use the Chebyshev (maximum) norm; ties go to the lowest
index.  States are row vectors (v_i, v_{i+tau}, ..., v_{i+(M-1)tau}).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import as_series
from .errors import DegenerateSeries, InvalidParams, SeriesTooShort


@dataclass(frozen=True)
class EmbeddingParams:
    m: int
    tau: int
    k: int


@dataclass
class CaoCurve:
    """E1/E2 curves over candidate dimensions d = 1..d_max-1.

    ``e_raw`` and ``e_star`` hold the underlying E(d) and E*(d) for
    d = 1..d_max; ``excluded`` counts coincident-neighbor pairs dropped from
    each E(d) mean.
    """

    e1: np.ndarray
    e2: np.ndarray
    e_raw: np.ndarray
    e_star: np.ndarray
    excluded: np.ndarray
    chosen_m: int
    saturation_found: bool
    tau: int
    d_max: int


def select_delay(series, max_lag=None):
    """Pick the embedding delay from the autocorrelation function.

    Returns the first lag where the autocorrelation drops below 1/e; if none
    does within range, the lag of the first local autocorrelation minimum;
    failing both, 1.  A constant series yields 1 with a warning.

    Parameters
    ----------
    series : array, shape (N,)
    max_lag : int, optional
        Largest lag considered; must satisfy max_lag < N/2.  Defaults to
        min(N//2 - 1, 100).
    """
    x = as_series(series, "series", min_len=2)
    n = x.size
    if n < 8:
        raise SeriesTooShort(f"delay selection needs N >= 8, got {n}")
    if max_lag is None:
        max_lag = min(n // 2 - 1, 100)
    if not 1 <= max_lag < n / 2:
        raise ValueError(f"max_lag must satisfy 1 <= max_lag < N/2, got {max_lag}")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        warnings.warn("constant series: autocorrelation undefined, tau = 1")
        return 1
    acf = np.array(
        [float(centered[:-k] @ centered[k:]) / denom for k in range(1, max_lag + 1)]
    )
    below = np.flatnonzero(acf < 1.0 / np.e)
    if below.size:
        return int(below[0]) + 1
    for k in range(1, max_lag - 1):
        if acf[k] < acf[k - 1] and acf[k] < acf[k + 1]:
            return k + 1
    return 1


def embed_series(series, m, tau):
    """Build the K x M state matrix with K = N - (M-1)*tau rows.

    Row i (0-indexed) is (v_i, v_{i+tau}, ..., v_{i+(M-1)tau}).
    """
    x = as_series(series, "series", min_len=2)
    m = int(m)
    tau = int(tau)
    if m < 1 or tau < 1:
        raise InvalidParams(f"need m >= 1 and tau >= 1, got m={m} tau={tau}")
    k = x.size - (m - 1) * tau
    if k < 1:
        raise InvalidParams(
            f"(M-1)*tau = {(m - 1) * tau} must be < N = {x.size}"
        )
    out = np.empty((k, m), dtype=np.float64)
    for j in range(m):
        out[:, j] = x[j * tau : j * tau + k]
    return out


def _chebyshev_neighbors(points, floor=0.0, chunk_elems=4_000_000):
    """Nearest neighbor of each row under the max norm, self excluded.

    Candidates at distance <= floor count as coincident and are skipped.
    Exact ties resolve to the lowest index.  Returns (indices, distances);
    rows with no admissible neighbor get distance -1.
    """
    n, dim = points.shape
    nn_idx = np.empty(n, dtype=np.intp)
    nn_dist = np.empty(n, dtype=np.float64)
    chunk = max(1, int(chunk_elems // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = points[start:stop]
        dist = np.abs(block[:, 0:1] - points[:, 0][None, :])
        for j in range(1, dim):
            np.maximum(dist, np.abs(block[:, j : j + 1] - points[:, j][None, :]), out=dist)
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        masked = np.where(dist <= floor, np.inf, dist)
        idx = np.argmin(masked, axis=1)
        best = masked[np.arange(stop - start), idx]
        nn_idx[start:stop] = idx
        nn_dist[start:stop] = np.where(np.isfinite(best), best, -1.0)
    return nn_idx, nn_dist


def cao_curves(series, tau, d_max=12, coincidence_rtol=1e-10):
    """Cao's E1/E2 statistics for dimensions d = 1..d_max-1.

    For each d, every state y_i in the d-dimensional reconstruction (over the
    index range where the (d+1)-dimensional state also exists) is paired with
    its Chebyshev nearest neighbor n(i); the ratio

        a(i, d) = ||y_i^(d+1) - y_n^(d+1)||_inf / ||y_i^(d) - y_n^(d)||_inf

    is averaged into E(d), and E1(d) = E(d+1)/E(d).  E*(d) averages the
    absolute difference of the states' next delayed samples, |v_{i+d*tau} -
    v_{n+d*tau}|, giving E2(d) = E*(d+1)/E*(d).

    Neighbor candidates within ``coincidence_rtol * range(series)`` are
    treated as coincident copies of the state and skipped, so exactly
    periodic signals keep geometrically meaningful neighbors instead of
    float-rounding artifacts; states with no admissible neighbor at all are
    excluded from the means and counted per dimension.

    Raises
    ------
    InvalidParams
        If d_max < 3 or the series is too short for the largest embedding.
    DegenerateSeries
        If at some dimension every state coincides with every neighbor.
    """
    x = as_series(series, "series", min_len=2)
    tau = int(tau)
    d_max = int(d_max)
    if d_max < 3:
        raise InvalidParams(f"d_max must be >= 3, got {d_max}")
    if tau < 1:
        raise InvalidParams(f"tau must be >= 1, got {tau}")
    n = x.size
    if n - d_max * tau < 2:
        raise InvalidParams(
            f"series too short: need N - d_max*tau >= 2, got N={n}, "
            f"d_max={d_max}, tau={tau}"
        )
    floor = coincidence_rtol * float(np.ptp(x))
    e_raw = np.empty(d_max, dtype=np.float64)
    e_star = np.empty(d_max, dtype=np.float64)
    excluded = np.zeros(d_max, dtype=np.intp)
    for d in range(1, d_max + 1):
        n_valid = n - d * tau  # states whose (d+1)-dim extension exists
        points = embed_series(x, d, tau)[:n_valid]
        nn_idx, nn_dist = _chebyshev_neighbors(points, floor=floor)
        ok = nn_dist > 0.0
        excluded[d - 1] = n_valid - int(ok.sum())
        if not ok.any():
            raise DegenerateSeries(
                f"every state coincides with its neighbor at dimension {d}"
            )
        next_diff = np.abs(x[d * tau : d * tau + n_valid] - x[nn_idx + d * tau])
        dist_up = np.maximum(nn_dist, next_diff)
        e_raw[d - 1] = float(np.mean(dist_up[ok] / nn_dist[ok]))
        e_star[d - 1] = float(np.mean(next_diff[ok]))
    if np.any(e_raw == 0.0) or np.any(e_star == 0.0):
        raise DegenerateSeries("zero mean neighbor distance; E ratios undefined")
    e1 = e_raw[1:] / e_raw[:-1]
    e2 = e_star[1:] / e_star[:-1]
    chosen_m, saturated = choose_dimension(e1)
    return CaoCurve(
        e1=e1,
        e2=e2,
        e_raw=e_raw,
        e_star=e_star,
        excluded=excluded,
        chosen_m=chosen_m,
        saturation_found=saturated,
        tau=tau,
        d_max=d_max,
    )


def choose_dimension(e1, epsilon=0.05):
    """Smallest d whose E1 values stay within epsilon of 1 from d onward.

    Returns (m, saturation_found); when no suffix saturates, m is d_max
    (= len(e1) + 1) with saturation_found False.
    """
    e1 = np.asarray(e1, dtype=np.float64)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    within = np.abs(e1 - 1.0) < epsilon
    suffix_ok = np.logical_and.accumulate(within[::-1])[::-1]
    hits = np.flatnonzero(suffix_ok)
    if hits.size:
        return int(hits[0]) + 1, True
    return int(e1.size) + 1, False


def embedding_params(series, tau="auto", m="auto", d_max=12, epsilon=0.05,
                     max_lag=None):
    """Resolve (M, tau, K) for one series, computing whatever is 'auto'."""
    x = as_series(series, "series", min_len=2)
    if tau == "auto":
        tau = select_delay(x, max_lag=max_lag)
    tau = int(tau)
    if m == "auto":
        curve = cao_curves(x, tau, d_max=d_max)
        m, _ = choose_dimension(curve.e1, epsilon=epsilon)
    m = int(m)
    k = x.size - (m - 1) * tau
    if k < 2:
        raise InvalidParams(
            f"embedding leaves K={k} states; need K >= 2 (N={x.size}, m={m}, tau={tau})"
        )
    return EmbeddingParams(m=m, tau=tau, k=k)
