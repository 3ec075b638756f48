"""Domain types, cohort ingestion/validation, and the on-disk dataset layout.

A cohort lives in a directory with a ``manifest.csv`` (columns
``subject_id,label,path``) and one subdirectory per subject holding one CSV
per network (``default_mode.csv``, ..., ``cerebellum.csv``).  Network CSVs
have one header row of ROI labels and one row per timepoint.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidLabel,
    LengthMismatch,
    MissingNetworkFile,
    NonFiniteSample,
    RoiCountMismatch,
)
from .networks import NETWORK_NAMES, expected_roi_count

# Serialization with 17 significant digits makes float64 round-trips bit-stable.
_FLOAT_FMT = "{:.17g}"


@dataclass(frozen=True)
class RoiTimeSeries:
    """One ROI's representative signal with its identity."""

    roi_id: int
    roi_label: str
    network: str
    values: np.ndarray

    @property
    def n_timepoints(self):
        return int(self.values.shape[0])


@dataclass
class VoxelBlock:
    """A dense (X, Y, Z) grid of voxel time series belonging to one region.

    ``series`` has shape (X, Y, Z, N).
    """

    series: np.ndarray
    region_id: str = ""

    @property
    def dims(self):
        return tuple(int(d) for d in self.series.shape[:3])

    @property
    def n_timepoints(self):
        return int(self.series.shape[3])


@dataclass
class Subject:
    subject_id: str
    label: int
    networks: dict = field(default_factory=dict)  # name -> list[RoiTimeSeries]

    def network_matrix(self, network):
        """Stack one network's ROI series into an (N, n_rois) matrix."""
        series = self.networks[network]
        return np.column_stack([ts.values for ts in series])

    def roi_labels(self, network):
        return [ts.roi_label for ts in self.networks[network]]


@dataclass
class CohortDataset:
    subjects: list
    n_timepoints: int

    @property
    def network_names(self):
        if not self.subjects:
            return ()
        return tuple(self.subjects[0].networks)

    def labels(self):
        return np.array([s.label for s in self.subjects], dtype=int)


@dataclass
class ValidationReport:
    n_subjects: int
    n_timepoints: int
    label_counts: dict
    per_subject: list
    constant_series: list
    warnings: list

    def to_dict(self):
        return {
            "n_subjects": self.n_subjects,
            "n_timepoints": self.n_timepoints,
            "label_counts": {str(k): v for k, v in self.label_counts.items()},
            "per_subject": self.per_subject,
            "constant_series": self.constant_series,
            "warnings": self.warnings,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _parse_label(raw, subject_id):
    text = str(raw).strip()
    if text not in ("0", "1"):
        raise InvalidLabel(
            f"subject {subject_id}: label must be 0 or 1, got {raw!r}"
        )
    return int(text)


def _read_network_csv(path, subject_id, network, expected_rois, expected_n):
    """Read one network CSV, enforcing ROI count, finiteness, and length."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LengthMismatch(f"{path}: empty file") from None
        labels = [h.strip() for h in header]
        if expected_rois is not None and len(labels) != expected_rois:
            raise RoiCountMismatch(network, expected_rois, len(labels))
        rows = []
        for t, row in enumerate(reader):
            if len(row) != len(labels):
                raise LengthMismatch(
                    f"{path}: row {t} has {len(row)} values, expected {len(labels)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad = next(i for i, v in enumerate(row) if not _is_float(v))
                raise NonFiniteSample(subject_id, network, labels[bad], t) from None
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[0] < 2:
        raise LengthMismatch(
            f"{path}: need at least 2 timepoints, found {data.shape[0]}"
        )
    if expected_n is not None and data.shape[0] != expected_n:
        raise LengthMismatch(
            f"{path}: {data.shape[0]} timepoints, expected {expected_n} "
            f"(all ROIs of a cohort must share one length)"
        )
    finite = np.isfinite(data)
    if not finite.all():
        t, r = np.argwhere(~finite)[0]
        raise NonFiniteSample(subject_id, network, labels[r], int(t))
    return labels, data


def _is_float(text):
    try:
        v = float(text)
    except ValueError:
        return False
    return np.isfinite(v)


def load_cohort(root_path, manifest=None):
    """Load and validate a cohort from its on-disk layout.

    Parameters
    ----------
    root_path : str or Path
        Cohort directory.
    manifest : str or Path, optional
        Manifest CSV; defaults to ``<root_path>/manifest.csv``.

    Returns
    -------
    CohortDataset
        Subjects in manifest order, every invariant enforced.
    """
    root_path = os.fspath(root_path)
    if manifest is None:
        manifest = os.path.join(root_path, "manifest.csv")
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        entries = list(reader)
    subjects = []
    n_timepoints = None
    for entry in entries:
        subject_id = entry["subject_id"].strip()
        label = _parse_label(entry["label"], subject_id)
        subject_dir = os.path.join(root_path, entry["path"].strip())
        networks = {}
        for network in NETWORK_NAMES:
            path = os.path.join(subject_dir, f"{network}.csv")
            if not os.path.isfile(path):
                raise MissingNetworkFile(
                    f"subject {subject_id}: missing {network}.csv under {subject_dir}"
                )
            labels, data = _read_network_csv(
                path, subject_id, network, expected_roi_count(network), n_timepoints
            )
            if n_timepoints is None:
                n_timepoints = data.shape[0]
            networks[network] = [
                RoiTimeSeries(i, labels[i], network, data[:, i].copy())
                for i in range(data.shape[1])
            ]
        subjects.append(Subject(subject_id, label, networks))
    return CohortDataset(subjects, n_timepoints if n_timepoints is not None else 0)


def write_cohort(dataset, root_path):
    """Write a cohort in the on-disk layout (manifest + per-network CSVs)."""
    root_path = os.fspath(root_path)
    os.makedirs(root_path, exist_ok=True)
    with open(os.path.join(root_path, "manifest.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label", "path"])
        for subject in dataset.subjects:
            writer.writerow([subject.subject_id, subject.label, subject.subject_id])
    for subject in dataset.subjects:
        subject_dir = os.path.join(root_path, subject.subject_id)
        os.makedirs(subject_dir, exist_ok=True)
        for network, series in subject.networks.items():
            path = os.path.join(subject_dir, f"{network}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([ts.roi_label for ts in series])
                data = np.column_stack([ts.values for ts in series])
                for row in data:
                    writer.writerow([_FLOAT_FMT.format(v) for v in row])
    return root_path


def validate_dataset(dataset):
    """Summarize a cohort: sizes, label balance, and constant ROI series.

    Report-only; constant series are flagged, never rejected.
    """
    warnings = []
    if not dataset.subjects:
        warnings.append("empty subject list")
    label_counts = {0: 0, 1: 0}
    per_subject = []
    constant = []
    for subject in dataset.subjects:
        label_counts[subject.label] = label_counts.get(subject.label, 0) + 1
        n_rois = sum(len(v) for v in subject.networks.values())
        per_subject.append(
            {
                "subject_id": subject.subject_id,
                "label": subject.label,
                "n_timepoints": dataset.n_timepoints,
                "n_rois": n_rois,
            }
        )
        for network, series in subject.networks.items():
            for ts in series:
                if ts.values.size and np.ptp(ts.values) == 0.0:
                    constant.append(
                        {
                            "subject_id": subject.subject_id,
                            "network": network,
                            "roi_label": ts.roi_label,
                        }
                    )
    if constant:
        warnings.append(f"{len(constant)} constant ROI series flagged")
    return ValidationReport(
        n_subjects=len(dataset.subjects),
        n_timepoints=dataset.n_timepoints,
        label_counts=label_counts,
        per_subject=per_subject,
        constant_series=constant,
        warnings=warnings,
    )
