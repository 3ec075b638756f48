"""Ground-truth signal and cohort generators backing the test oracles.

Everything here is a pure function of its parameters and seed: per-subject
randomness derives from (seed, subject index) stream splits, so generation
order and scheduling never change the output.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import CohortDataset, RoiTimeSeries, Subject
from .errors import InvalidSpec, NotPositiveDefinite
from .networks import NETWORK_ROI_COUNTS, network_for_roi_count

SIGNAL_KINDS = ("sine", "ar1", "gaussian_noise", "lorenz_x")


@dataclass
class GeneratorSpec:
    kind: str
    n_samples: int
    seed: int = 0
    params: dict = field(default_factory=dict)


def gen_sine(n_samples, amplitude=1.0, period=40.0, phase=0.0):
    """v_t = A sin(2 pi t / p + phi), t = 0..N-1."""
    t = np.arange(int(n_samples), dtype=np.float64)
    return amplitude * np.sin(2.0 * np.pi * t / period + phase)


def gen_gaussian_noise(n_samples, sigma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return sigma * rng.standard_normal(int(n_samples))


def gen_ar1(n_samples, phi=0.5, sigma=1.0, seed=0):
    """v_t = phi * v_{t-1} + eps_t with standard-normal innovations."""
    if not -1.0 < phi < 1.0:
        raise InvalidSpec(f"ar1 needs |phi| < 1, got {phi}")
    rng = np.random.default_rng(seed)
    eps = sigma * rng.standard_normal(int(n_samples))
    out = np.empty(int(n_samples), dtype=np.float64)
    prev = 0.0
    for t in range(int(n_samples)):
        prev = phi * prev + eps[t]
        out[t] = prev
    return out


def _lorenz_rhs(state, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def gen_lorenz_x(n_samples, dt=0.01, seed=0, discard=1000):
    """x-component of the Lorenz system, classical fixed-step 4th-order
    integration with sigma=10, rho=28, beta=8/3; the first ``discard`` steps
    are dropped as transient."""
    if dt <= 0:
        raise InvalidSpec(f"dt must be > 0, got {dt}")
    rng = np.random.default_rng(seed)
    state = np.array([1.0, 1.0, 1.05]) + 0.05 * rng.standard_normal(3)
    n_total = int(n_samples) + int(discard)
    out = np.empty(n_total, dtype=np.float64)
    for i in range(n_total):
        k1 = _lorenz_rhs(state)
        k2 = _lorenz_rhs(state + 0.5 * dt * k1)
        k3 = _lorenz_rhs(state + 0.5 * dt * k2)
        k4 = _lorenz_rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i] = state[0]
    return out[discard:]


def gen_signal(spec):
    """Generate one RoiTimeSeries from a GeneratorSpec."""
    if spec.n_samples < 8:
        raise InvalidSpec(f"n_samples must be >= 8, got {spec.n_samples}")
    if spec.kind == "sine":
        values = gen_sine(spec.n_samples, **spec.params)
    elif spec.kind == "gaussian_noise":
        values = gen_gaussian_noise(spec.n_samples, seed=spec.seed, **spec.params)
    elif spec.kind == "ar1":
        values = gen_ar1(spec.n_samples, seed=spec.seed, **spec.params)
    elif spec.kind == "lorenz_x":
        values = gen_lorenz_x(spec.n_samples, seed=spec.seed, **spec.params)
    else:
        raise InvalidSpec(f"unknown signal kind {spec.kind!r}")
    return RoiTimeSeries(
        roi_id=0, roi_label=spec.kind, network="synthetic", values=values
    )


def _spd_cholesky(matrix, what):
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidSpec(f"{what} must be square, got shape {matrix.shape}")
    if np.max(np.abs(matrix - matrix.T)) > 0:
        raise InvalidSpec(f"{what} must be symmetric")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite") from exc


def ground_truth_partial_correlation(precision):
    """Partial correlations implied by a precision matrix (structural)."""
    p = np.asarray(precision, dtype=np.float64)
    scale = np.sqrt(np.diag(p))
    rho = -p / np.outer(scale, scale)
    np.fill_diagonal(rho, 0.0)
    return rho


def _sample_network(precision_chol_cov, n_timepoints, rng):
    # cov = L L^T; rows are iid N(0, cov)
    z = rng.standard_normal((n_timepoints, precision_chol_cov.shape[0]))
    return z @ precision_chol_cov.T


def _covariance_factor(precision):
    chol = _spd_cholesky(precision, "precision matrix")
    cov = scipy.linalg.cho_solve((chol, True), np.eye(precision.shape[0]))
    cov = (cov + cov.T) / 2.0
    return np.linalg.cholesky(cov)


def gen_cohort_from_precision(precision_class0, precision_class1,
                              subjects_per_class, n_timepoints, seed,
                              network=None):
    """Two-class Gaussian cohort with known precision (hence known partial
    correlations) per class.

    Each subject's (N, n) series matrix holds i.i.d. multivariate normal
    rows with covariance P_c^{-1}, sampled through a Cholesky factor of the
    covariance.  Subjects are ordered class 0 then class 1.
    """
    p0 = np.asarray(precision_class0, dtype=np.float64)
    p1 = np.asarray(precision_class1, dtype=np.float64)
    if p0.shape != p1.shape:
        raise InvalidSpec("class precision matrices must share a shape")
    if n_timepoints < 8:
        raise InvalidSpec(f"n_timepoints must be >= 8, got {n_timepoints}")
    n = p0.shape[0]
    if network is None:
        network = network_for_roi_count(n) or "synthetic"
    expected = NETWORK_ROI_COUNTS.get(network)
    if expected is not None and expected != n:
        raise InvalidSpec(
            f"network {network!r} requires {expected} ROIs, precision has {n}"
        )
    factors = [_covariance_factor(p0), _covariance_factor(p1)]
    roi_labels = [f"roi_{i:03d}" for i in range(n)]
    subjects = []
    index = 0
    for cls in (0, 1):
        for _ in range(int(subjects_per_class)):
            rng = np.random.default_rng([int(seed), index])
            data = _sample_network(factors[cls], int(n_timepoints), rng)
            series = [
                RoiTimeSeries(i, roi_labels[i], network, data[:, i].copy())
                for i in range(n)
            ]
            subjects.append(
                Subject(f"sub-{index:03d}", cls, {network: series})
            )
            index += 1
    return CohortDataset(subjects, int(n_timepoints))


def designated_hub(n_rois):
    """Index of the hub ROI used by the two-class generator."""
    return int(n_rois) // 2


def hub_precision(n_rois, hub_scale=1.0, hub_weight=0.7, hub_diag=5.0,
                  n_hub_edges=6, chain_weight=0.12):
    """Precision matrix with a star-connected hub over a weak chain background.

    The hub row carries ``n_hub_edges`` off-diagonal entries of
    -hub_weight * hub_scale against an inflated diagonal; the remaining
    nodes form a consecutive-index chain with entries -chain_weight.  With
    the defaults the matrix is strictly diagonally dominant, hence positive
    definite, for any hub_scale in [0, 1].
    """
    n = int(n_rois)
    if n < 3:
        raise InvalidSpec(f"need at least 3 ROIs, got {n}")
    hub = designated_hub(n)
    p = np.eye(n)
    non_hub = [i for i in range(n) if i != hub]
    for a, b in zip(non_hub[:-1], non_hub[1:]):
        p[a, b] = p[b, a] = -chain_weight
    neighbors = non_hub[: int(n_hub_edges)]
    p[hub, hub] = hub_diag
    for j in neighbors:
        p[hub, j] = p[j, hub] = -hub_weight * hub_scale
    return p


def _load_diagonal_until_spd(p):
    """Add diagonal loading until the matrix factorizes; returns (p, loading)."""
    loading = 0.0
    step = 1e-6
    while True:
        try:
            np.linalg.cholesky(p + loading * np.eye(p.shape[0]))
            break
        except np.linalg.LinAlgError:
            loading = step if loading == 0.0 else loading * 2.0
            if loading > 1e6:
                raise NotPositiveDefinite(
                    "diagonal loading failed to restore positive definiteness"
                ) from None
    if loading > 0.0:
        p = p + loading * np.eye(p.shape[0])
    return p, loading


def gen_two_class_cohort(separation, subjects_per_class, n_timepoints, n_rois,
                         seed, all_networks=False):
    """Synthetic cohort whose classes differ only in hub connectivity.

    Class 0 uses the base hub precision; class 1 scales the hub's
    off-diagonal entries by (1 - separation), so separation 0 makes the
    classes statistically identical and separation 1 disconnects the hub.
    If a large separation breaks positive definiteness, the matrix is
    diagonally loaded and the loading reported via a warning attribute on
    the returned dataset (``diagonal_loading``).

    With ``all_networks=True`` the cohort carries all six canonical
    networks; the hub structure lives in the network whose ROI count equals
    ``n_rois`` and the others use the neutral chain-only precision for both
    classes.
    """
    if separation < 0:
        raise InvalidSpec(f"separation must be >= 0, got {separation}")
    p0 = hub_precision(n_rois, hub_scale=1.0)
    p1 = hub_precision(n_rois, hub_scale=1.0 - float(separation))
    p1, loading = _load_diagonal_until_spd(p1)
    if all_networks:
        signal_network = network_for_roi_count(n_rois)
        if signal_network is None:
            raise InvalidSpec(
                f"all_networks=True needs n_rois matching a canonical network, "
                f"got {n_rois}"
            )
        cohort = gen_cohort_from_precision(
            p0, p1, subjects_per_class, n_timepoints, seed, network=signal_network
        )
        for net_index, (name, count) in enumerate(NETWORK_ROI_COUNTS.items()):
            if name == signal_network:
                continue
            neutral = hub_precision(count, hub_scale=0.0)
            factor = _covariance_factor(neutral)
            roi_labels = [f"roi_{i:03d}" for i in range(count)]
            for index, subject in enumerate(cohort.subjects):
                rng = np.random.default_rng([int(seed), index, net_index + 1])
                data = _sample_network(factor, int(n_timepoints), rng)
                subject.networks[name] = [
                    RoiTimeSeries(i, roi_labels[i], name, data[:, i].copy())
                    for i in range(count)
                ]
        for subject in cohort.subjects:
            subject.networks = {
                name: subject.networks[name] for name in NETWORK_ROI_COUNTS
            }
    else:
        cohort = gen_cohort_from_precision(
            p0, p1, subjects_per_class, n_timepoints, seed
        )
    cohort.diagonal_loading = loading
    return cohort
