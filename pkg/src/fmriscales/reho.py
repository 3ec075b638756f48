"""Regional homogeneity: Kendall's coefficient of concordance over voxel
neighborhoods, and selection of a representative time series per region.

Each voxel is scored by the concordance of its time series with its (up to)
26 in-bounds neighbors; voxels at or above the region's mean score are
averaged into the representative signal.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ._validation import as_series
from .data import RoiTimeSeries, VoxelBlock
from .errors import DegenerateInput, NoDefinedReho


@dataclass
class RehoMap:
    """Per-voxel concordance values W in [0, 1] with a defined-ness mask."""

    w: np.ndarray        # (X, Y, Z) float, 0 where undefined
    defined: np.ndarray  # (X, Y, Z) bool
    region_id: str = ""

    @property
    def dims(self):
        return tuple(int(d) for d in self.w.shape)


def rank_transform(series):
    """Mid-rank transform of a series; ties receive average ranks.

    The rank sum is exactly N(N+1)/2 for any input.
    """
    arr = as_series(series, "series", min_len=2)
    return rankdata(arr, method="average")


def _tie_correction(ranks):
    # sum over tie groups of (g^3 - g) for one ranker
    _, counts = np.unique(ranks, return_counts=True)
    counts = counts.astype(np.float64)
    return float(np.sum(counts**3 - counts))


def kcc(rank_rows):
    """Kendall's coefficient of concordance W for m rank-transformed rows.

    Parameters
    ----------
    rank_rows : array, shape (m, N)
        One row of mid-ranks per ranker (voxel), m >= 2, N >= 2.

    Returns
    -------
    float
        W = 12 S / (m^2 (N^3 - N) - m T) in [0, 1], where S is the sum of
        squared deviations of the per-item rank sums and T the tie
        correction sum over rankers.

    Raises
    ------
    DegenerateInput
        If the denominator is <= 0 (every row fully tied).
    """
    rows = np.asarray(rank_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] < 2:
        raise ValueError(f"need (m >= 2, N >= 2) rank rows, got shape {rows.shape}")
    m, n = rows.shape
    rank_sums = rows.sum(axis=0)
    s = float(np.sum((rank_sums - rank_sums.mean()) ** 2))
    t = sum(_tie_correction(rows[i]) for i in range(m))
    denom = m * m * (n**3 - n) - m * t
    if denom <= 0:
        raise DegenerateInput("all rank rows fully tied; W undefined")
    return min(max(12.0 * s / denom, 0.0), 1.0)


def _neighborhood(ix, iy, iz, dims, include_center):
    xs = range(max(ix - 1, 0), min(ix + 2, dims[0]))
    ys = range(max(iy - 1, 0), min(iy + 2, dims[1]))
    zs = range(max(iz - 1, 0), min(iz + 2, dims[2]))
    for x in xs:
        for y in ys:
            for z in zs:
                if not include_center and (x, y, z) == (ix, iy, iz):
                    continue
                yield x, y, z


def reho_map(block, include_center=True):
    """Concordance map over a voxel block.

    Each voxel's W is the KCC of its cluster: the voxel plus its in-bounds
    26-neighborhood (truncated at block boundaries).  Clusters of size < 2
    and fully tied clusters yield W = 0 flagged undefined.

    Parameters
    ----------
    block : VoxelBlock
    include_center : bool
        If False, score each voxel by its neighbors only (26-voxel cluster).
    """
    dims = block.dims
    n = block.n_timepoints
    if n < 2:
        raise ValueError("voxel series need at least 2 timepoints")
    ranks = rankdata(block.series, method="average", axis=-1)
    w = np.zeros(dims, dtype=np.float64)
    defined = np.zeros(dims, dtype=bool)
    for ix in range(dims[0]):
        for iy in range(dims[1]):
            for iz in range(dims[2]):
                cluster = [
                    ranks[x, y, z]
                    for x, y, z in _neighborhood(ix, iy, iz, dims, include_center)
                ]
                if len(cluster) < 2:
                    continue
                try:
                    w[ix, iy, iz] = kcc(np.asarray(cluster))
                except DegenerateInput:
                    continue
                defined[ix, iy, iz] = True
    return RehoMap(w=w, defined=defined, region_id=block.region_id)


def select_representative(block, rmap):
    """Average the high-concordance voxels into one representative series.

    Candidate voxels are those whose W is at least the mean of the defined
    W values; the maximum-W voxel always qualifies, so the candidate set is
    never empty.

    Returns
    -------
    RoiTimeSeries
        Per-timepoint mean over candidate voxels; ``roi_label`` carries the
        block's region id and caller assigns network identity.
    """
    if not rmap.defined.any():
        raise NoDefinedReho(
            f"region {block.region_id or '?'}: every voxel's W is undefined"
        )
    mean_w = rmap.w[rmap.defined].mean()
    candidates = rmap.defined & (rmap.w >= mean_w)
    values = block.series[candidates].mean(axis=0)
    return RoiTimeSeries(
        roi_id=0, roi_label=str(block.region_id), network="", values=values
    )


# --- voxel-block interchange format ---------------------------------------

def load_voxel_block(path, region_id=""):
    """Read a voxel block CSV: one row per voxel, columns x,y,z then samples.

    The grid must be dense: every (x, y, z) in the bounding box present once.
    """
    coords = []
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:3]] != ["x", "y", "z"]:
            raise ValueError(f"{path}: header must start with x,y,z")
        for row in reader:
            coords.append(tuple(int(v) for v in row[:3]))
            rows.append([float(v) for v in row[3:]])
    if not coords:
        raise ValueError(f"{path}: no voxels")
    data = np.asarray(rows, dtype=np.float64)
    dims = tuple(max(c[i] for c in coords) + 1 for i in range(3))
    if len(coords) != dims[0] * dims[1] * dims[2] or len(set(coords)) != len(coords):
        raise ValueError(f"{path}: voxel grid must be dense and duplicate-free")
    series = np.empty(dims + (data.shape[1],), dtype=np.float64)
    for (x, y, z), values in zip(coords, data):
        series[x, y, z] = values
    return VoxelBlock(series=series, region_id=region_id)


def write_reho_map(rmap, path):
    """Write a RehoMap as CSV with columns x,y,z,w,defined."""
    with open(os.fspath(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "w", "defined"])
        dims = rmap.dims
        for x in range(dims[0]):
            for y in range(dims[1]):
                for z in range(dims[2]):
                    writer.writerow(
                        [x, y, z, f"{rmap.w[x, y, z]:.17g}", int(rmap.defined[x, y, z])]
                    )
    return path
