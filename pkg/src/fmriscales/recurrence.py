"""Recurrence matrices, recurrence quantification measures, and grayscale
recurrence-plot rendering.

The recurrence matrix holds pairwise Euclidean distances between state
vectors; its grayscale image is the recurrence plot.  A thresholded binary
matrix (fixed radius or target recurrence rate) feeds the line-based RQA
measures: recurrence rate, determinism, mean/max diagonal line length,
laminarity, trapping time, and diagonal-length entropy.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_matrix, as_square_matrix
from .embedding import embed_series, embedding_params
from .errors import InvalidRate

RQA_FEATURE_NAMES = ("rr", "det", "lmean", "lmax", "lam", "tt", "entr")


@dataclass
class BinaryRecurrence:
    """Thresholded recurrence matrix; diagonal is all True by construction."""

    bits: np.ndarray
    threshold_rule: str   # "fixed" or "target_rate"
    epsilon: float


@dataclass
class RqaFeatures:
    rr: float
    det: float
    l_mean: float
    l_max: int
    lam: float
    tt: float
    entr: float
    no_recurrences: bool = False

    def as_vector(self):
        return np.array(
            [self.rr, self.det, self.l_mean, self.l_max, self.lam, self.tt, self.entr],
            dtype=np.float64,
        )


def recurrence_matrix(states):
    """Pairwise Euclidean distances between state vectors.

    Each unordered pair is computed once and mirrored, so the result is
    bit-exactly symmetric with an exactly zero diagonal.
    """
    states = as_matrix(states, "states")
    if states.shape[0] == 1:
        return np.zeros((1, 1), dtype=np.float64)
    return squareform(pdist(states, metric="euclidean"))


def threshold(rm, epsilon=None, target_rate=None):
    """Binarize a recurrence matrix by fixed radius or target recurrence rate.

    Exactly one of ``epsilon`` and ``target_rate`` must be given.  The
    target-rate rule sets the radius to the requested quantile of the
    off-diagonal distances, so the achieved recurrence rate lands within one
    quantile step of the target.
    """
    rm = as_square_matrix(rm, "recurrence matrix")
    if (epsilon is None) == (target_rate is None):
        raise ValueError("give exactly one of epsilon or target_rate")
    if target_rate is not None:
        if not 0.0 < target_rate < 1.0:
            raise InvalidRate(f"target rate must lie in (0, 1), got {target_rate}")
        if rm.shape[0] < 2:
            raise InvalidRate("target-rate thresholding needs K >= 2")
        epsilon = float(np.quantile(squareform(rm, checks=False), target_rate))
        rule = "target_rate"
    else:
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        rule = "fixed"
    return BinaryRecurrence(bits=rm <= epsilon, threshold_rule=rule, epsilon=float(epsilon))


def _run_lengths(line):
    """Lengths of consecutive True runs in a 1-D boolean array."""
    if line.size == 0:
        return np.empty(0, dtype=np.intp)
    flat = np.concatenate(([0], line.astype(np.int8), [0]))
    edges = np.diff(flat)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return ends - starts


def diagonal_line_histogram(bits):
    """Counts of diagonal line lengths, main diagonal excluded.

    Returns an array ``hist`` where ``hist[l]`` is the number of diagonal
    lines of length l (index 0 unused).
    """
    k = bits.shape[0]
    hist = np.zeros(k + 1, dtype=np.int64)
    for offset in range(1, k):
        for diag in (np.diagonal(bits, offset), np.diagonal(bits, -offset)):
            for length in _run_lengths(diag):
                hist[length] += 1
    return hist


def vertical_line_histogram(bits):
    """Counts of vertical line lengths over all columns (diagonal included)."""
    k = bits.shape[0]
    hist = np.zeros(k + 1, dtype=np.int64)
    for col in range(k):
        for length in _run_lengths(bits[:, col]):
            hist[length] += 1
    return hist


def rqa_measures(br, l_min=2, v_min=2):
    """Line-based recurrence quantification of a binary recurrence matrix.

    Parameters
    ----------
    br : BinaryRecurrence or boolean array (K, K), K >= 2
    l_min, v_min : int
        Minimum diagonal / vertical line lengths entering DET, L-statistics,
        LAM, and TT.

    Returns
    -------
    RqaFeatures
        With no off-diagonal recurrences, every line-based measure is 0 and
        ``no_recurrences`` is set.
    """
    bits = br.bits if isinstance(br, BinaryRecurrence) else np.asarray(br, dtype=bool)
    k = bits.shape[0]
    if bits.ndim != 2 or bits.shape[0] != bits.shape[1] or k < 2:
        raise ValueError(f"need a square boolean matrix with K >= 2, got {bits.shape}")
    if l_min < 1 or v_min < 1:
        raise ValueError("l_min and v_min must be >= 1")
    off_diag_points = int(bits.sum()) - int(np.diagonal(bits).sum())
    rr = off_diag_points / (k * (k - 1))

    lengths = np.arange(k + 1, dtype=np.float64)
    dhist = diagonal_line_histogram(bits)
    total_diag_points = float(lengths @ dhist)
    no_recurrences = total_diag_points == 0.0
    if no_recurrences:
        det, l_mean, l_max, entr = 0.0, 0.0, 0, 0.0
    else:
        det = float(lengths[l_min:] @ dhist[l_min:]) / total_diag_points
        n_lines = int(dhist[l_min:].sum())
        l_mean = (
            float(lengths[l_min:] @ dhist[l_min:]) / n_lines if n_lines else 0.0
        )
        l_max = int(np.max(np.flatnonzero(dhist)))
        if n_lines:
            p = dhist[l_min:][dhist[l_min:] > 0] / n_lines
            entr = float(-(p * np.log(p)).sum())
        else:
            entr = 0.0

    vhist = vertical_line_histogram(bits)
    total_vert_points = float(lengths @ vhist)
    if total_vert_points == 0.0:
        lam, tt = 0.0, 0.0
    else:
        lam = float(lengths[v_min:] @ vhist[v_min:]) / total_vert_points
        n_vert = int(vhist[v_min:].sum())
        tt = float(lengths[v_min:] @ vhist[v_min:]) / n_vert if n_vert else 0.0

    return RqaFeatures(
        rr=rr,
        det=det,
        l_mean=l_mean,
        l_max=l_max,
        lam=lam,
        tt=tt,
        entr=entr,
        no_recurrences=no_recurrences,
    )


def resize_bilinear(matrix, size=224):
    """Resize a square matrix by corner-aligned bilinear interpolation.

    Symmetric inputs give exactly symmetric outputs (each unordered cell is
    computed once and mirrored), and output values stay within the input's
    [min, max] range.
    """
    a = as_square_matrix(matrix, "matrix")
    size = int(size)
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    k = a.shape[0]
    if size == 1 or k == 1:
        return np.full((size, size), a[0, 0], dtype=np.float64)
    # Integer numerator keeps grid positions exact at the sample points, so
    # corners and constants survive bit-for-bit.
    pos = (np.arange(size) * (k - 1)) / (size - 1)
    i0 = pos.astype(np.intp)
    t = pos - i0
    i1 = np.minimum(i0 + 1, k - 1)
    rows = a[i0] + t[:, None] * (a[i1] - a[i0])
    out = rows[:, i0] + t[None, :] * (rows[:, i1] - rows[:, i0])
    upper = np.triu(out)
    return upper + np.triu(out, 1).T


def render_grayscale(matrix, path):
    """Write an 8-bit grayscale PGM (binary P5), row 0 at the top.

    Pixels are min-max normalized to 0..255 and rounded to nearest; a
    constant matrix renders as all-zero pixels.
    """
    a = as_matrix(matrix, "matrix")
    lo = a.min()
    hi = a.max()
    if hi > lo:
        pixels = np.rint(255.0 * (a - lo) / (hi - lo)).astype(np.uint8)
    else:
        pixels = np.zeros(a.shape, dtype=np.uint8)
    path = os.fspath(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


class RecurrenceFeaturizer(BaseEstimator, TransformerMixin):
    """Turn raw series rows into RQA feature rows.

    Each input row is delay-embedded (parameters selected per row unless
    pinned), converted to a recurrence matrix, thresholded at the target
    recurrence rate, and quantified.  Output columns follow
    ``RQA_FEATURE_NAMES``.

    Parameters
    ----------
    tau : "auto" or int
    dim : "auto" or int
    d_max, epsilon : Cao-curve controls used when dim="auto".
    target_rate : float
        Recurrence rate for thresholding.
    l_min, v_min : int
    force_states : int, optional
        Keep only the first ``force_states`` state vectors, pinning the
        recurrence matrix size.
    """

    def __init__(self, tau="auto", dim="auto", d_max=12, epsilon=0.05,
                 target_rate=0.1, l_min=2, v_min=2, force_states=None,
                 max_lag=None):
        self.tau = tau
        self.dim = dim
        self.d_max = d_max
        self.epsilon = epsilon
        self.target_rate = target_rate
        self.l_min = l_min
        self.v_min = v_min
        self.force_states = force_states
        self.max_lag = max_lag

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = as_matrix(X, "X")
        return np.vstack([self._featurize(row) for row in X])

    def _featurize(self, values):
        states = self.embed(values)
        rm = recurrence_matrix(states)
        br = threshold(rm, target_rate=self.target_rate)
        return rqa_measures(br, l_min=self.l_min, v_min=self.v_min).as_vector()

    def embed(self, values):
        params = embedding_params(
            values, tau=self.tau, m=self.dim, d_max=self.d_max,
            epsilon=self.epsilon, max_lag=self.max_lag,
        )
        states = embed_series(values, params.m, params.tau)
        if self.force_states is not None:
            if self.force_states > states.shape[0]:
                raise ValueError(
                    f"force_states={self.force_states} exceeds K={states.shape[0]}"
                )
            states = states[: self.force_states]
        return states

    def get_feature_names_out(self, input_features=None):
        return np.asarray(RQA_FEATURE_NAMES, dtype=object)
