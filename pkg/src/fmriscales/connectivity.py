"""Per-network partial-correlation graphs, eigen features, and degree-based
ROI rankings.

Edges carry partial correlations: the covariance of a network's ROI series
is (optionally shrunk and) inverted, and the precision matrix P maps to
rho_ij = -P_ij / sqrt(P_ii P_jj).  Eigen features come from the symmetric
eigendecomposition of the adjacency; ROI rankings count supra-threshold
edges per node.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_matrix, as_square_matrix, check_symmetric
from .errors import ConvergenceFailure, NonPositiveDiagonal, SingularCovariance


@dataclass
class BrainGraph:
    network: str
    adjacency: np.ndarray          # (n, n) symmetric, zero diagonal
    roi_labels: list
    stabilized_rois: list = field(default_factory=list)

    @property
    def n_rois(self):
        return int(self.adjacency.shape[0])


@dataclass
class EigenFeatures:
    eigenvalues: np.ndarray     # descending
    leading_vector: np.ndarray  # unit norm, sign-fixed


@dataclass
class DegreeRanking:
    degrees: np.ndarray     # (n,) integer edge counts
    ranked_rois: np.ndarray  # ROI indices, degree descending, index ascending


def sample_covariance(series_matrix):
    """Unbiased covariance of column-centered data (N x n, N >= 2)."""
    x = as_matrix(series_matrix, "series matrix")
    n_samples = x.shape[0]
    if n_samples < 2:
        raise ValueError(f"covariance needs N >= 2 rows, got {n_samples}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n_samples - 1)
    return (cov + cov.T) / 2.0


def precision_matrix(cov, shrinkage=0.0):
    """Invert a covariance after shrinking it toward its diagonal.

    The regularized matrix S = (1 - shrinkage) * cov + shrinkage * diag(cov)
    is factorized as symmetric positive definite; failure raises
    SingularCovariance with the smallest eigenvalue as diagnostic (the caller
    may raise the shrinkage).
    """
    cov = as_square_matrix(cov, "covariance")
    check_symmetric(cov, "covariance", tol=1e-8 * max(1.0, float(np.abs(cov).max())))
    if not 0.0 <= shrinkage < 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1), got {shrinkage}")
    s = (1.0 - shrinkage) * cov + shrinkage * np.diag(np.diag(cov))
    try:
        factor = scipy.linalg.cho_factor(s, lower=True)
        p = scipy.linalg.cho_solve(factor, np.eye(s.shape[0]))
    except scipy.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(s).min()) if s.size else 0.0
        raise SingularCovariance(
            f"regularized covariance is not positive definite "
            f"(smallest eigenvalue {smallest:.3e}); raise the shrinkage"
        ) from exc
    return (p + p.T) / 2.0


def partial_correlation(precision):
    """Partial correlations from a precision matrix.

    rho_ij = -P_ij / sqrt(P_ii * P_jj) off the diagonal; the diagonal is 0.
    """
    p = as_square_matrix(precision, "precision matrix")
    diag = np.diag(p)
    if np.any(diag <= 0):
        raise NonPositiveDiagonal(
            f"precision diagonal must be positive, min is {diag.min():.3e}"
        )
    scale = np.sqrt(diag)
    rho = -p / np.outer(scale, scale)
    np.fill_diagonal(rho, 0.0)
    return rho


def build_graph(subject, network, shrinkage=0.1):
    """Partial-correlation graph for one subject's network.

    Constant ROI series get a shrinkage-stabilized variance so the fixed ROI
    count is preserved; their indices are recorded on the returned graph.
    """
    series_matrix = subject.network_matrix(network)
    cov = sample_covariance(series_matrix)
    variances = np.diag(cov).copy()
    flagged = np.flatnonzero(variances <= 0.0)
    if flagged.size and shrinkage > 0.0:
        positive = variances[variances > 0.0]
        fill = shrinkage * (float(positive.mean()) if positive.size else 1.0)
        cov = cov.copy()
        for i in flagged:
            cov[i, i] = fill
    precision = precision_matrix(cov, shrinkage=shrinkage)
    adjacency = partial_correlation(precision)
    return BrainGraph(
        network=network,
        adjacency=adjacency,
        roi_labels=subject.roi_labels(network),
        stabilized_rois=[int(i) for i in flagged],
    )


def eigen_features(graph):
    """Full symmetric eigendecomposition of an adjacency matrix.

    Eigenvalues are sorted descending.  The leading eigenvector has unit
    Euclidean norm with its sign fixed so the largest-magnitude component is
    positive (ties resolve to the lowest index), making the feature
    deterministic across runs.
    """
    adjacency = graph.adjacency if isinstance(graph, BrainGraph) else graph
    a = as_square_matrix(adjacency, "adjacency")
    check_symmetric(a, "adjacency", tol=1e-10 * max(1.0, float(np.abs(a).max())))
    try:
        eigenvalues, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(
            f"eigendecomposition failed for {a.shape[0]}x{a.shape[0]} adjacency "
            f"(max |entry| {np.abs(a).max():.3e})"
        ) from exc
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    leading = vectors[:, order[0]].copy()
    pivot = int(np.argmax(np.abs(leading)))
    if leading[pivot] < 0:
        leading = -leading
    return EigenFeatures(eigenvalues=eigenvalues, leading_vector=leading)


def degree_and_rank(graph, edge_threshold=0.2, signed=False):
    """Count supra-threshold edges per ROI and rank ROIs by degree.

    An edge (i, j) exists iff |rho_ij| > threshold (or rho_ij > threshold
    with ``signed=True``).  Ranking is degree descending with ties broken by
    ROI index ascending.
    """
    adjacency = graph.adjacency if isinstance(graph, BrainGraph) else graph
    a = as_square_matrix(adjacency, "adjacency")
    if edge_threshold < 0:
        raise ValueError(f"edge threshold must be >= 0, got {edge_threshold}")
    weights = a if signed else np.abs(a)
    edges = weights > edge_threshold
    np.fill_diagonal(edges, False)
    degrees = edges.sum(axis=1).astype(np.int64)
    ranked = np.lexsort((np.arange(a.shape[0]), -degrees))
    return DegreeRanking(degrees=degrees, ranked_rois=ranked)


def top_roi_frequency(rankings, labels, k=10, roi_labels=None):
    """Cross-subject frequency of each ROI appearing in a subject's top-k.

    Parameters
    ----------
    rankings : sequence of DegreeRanking (or ranked index arrays), one per subject
    labels : sequence of 0/1 class labels aligned with ``rankings``
    k : int
        Ranking depth.
    roi_labels : list of str, optional

    Returns
    -------
    list of dict
        One row per (class, ROI) with keys ``label``, ``roi_index``,
        ``roi_label``, ``count``, ``class_size``, ``fraction``; rows sorted
        by class then count descending (ties by ROI index ascending).
    """
    if len(rankings) != len(labels):
        raise ValueError("rankings and labels must align")
    ranked_lists = [
        r.ranked_rois if isinstance(r, DegreeRanking) else np.asarray(r)
        for r in rankings
    ]
    if not ranked_lists:
        return []
    n = len(ranked_lists[0])
    if k > n:
        raise ValueError(f"k={k} exceeds ROI count {n}")
    if roi_labels is None:
        roi_labels = [str(i) for i in range(n)]
    rows = []
    labels = np.asarray(labels, dtype=int)
    for cls in (0, 1):
        members = [r for r, lab in zip(ranked_lists, labels) if lab == cls]
        if not members:
            continue
        counts = np.zeros(n, dtype=np.int64)
        for ranked in members:
            counts[ranked[:k]] += 1
        order = np.lexsort((np.arange(n), -counts))
        for roi in order:
            rows.append(
                {
                    "label": cls,
                    "roi_index": int(roi),
                    "roi_label": roi_labels[roi],
                    "count": int(counts[roi]),
                    "class_size": len(members),
                    "fraction": float(counts[roi] / len(members)),
                }
            )
    return rows


class ConnectivityEigenFeaturizer(BaseEstimator, TransformerMixin):
    """Per-subject eigen features from stacks of network series.

    Input is an array of shape (n_subjects, N, n_rois) or a sequence of
    (N, n_rois) matrices; output rows are eigenvalue vectors or leading
    eigenvectors of each subject's partial-correlation graph.

    Parameters
    ----------
    kind : {"leading_vector", "eigenvalues"}
    shrinkage : float
        Covariance shrinkage toward its diagonal.
    """

    def __init__(self, kind="leading_vector", shrinkage=0.1):
        self.kind = kind
        self.shrinkage = shrinkage

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if self.kind not in ("leading_vector", "eigenvalues"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        rows = []
        for series_matrix in X:
            cov = sample_covariance(series_matrix)
            rho = partial_correlation(precision_matrix(cov, shrinkage=self.shrinkage))
            feats = eigen_features(rho)
            rows.append(
                feats.leading_vector if self.kind == "leading_vector"
                else feats.eigenvalues
            )
        return np.vstack(rows)
