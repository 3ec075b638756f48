"""End-to-end orchestration: load -> per-ROI recurrence features ->
per-network graphs -> classification, with a resumable run directory.

A run directory is append-only: each stage owns a subdirectory and is
skipped when its primary output already exists.  Everything that lands in
``manifest.json`` and the metrics files is a pure function of (config,
dataset); wall-clock times go to a separate ``timing.json`` so reruns are
byte-identical.
"""

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import classify as classify_mod
from . import connectivity, data, recurrence
from ._version import __version__
from .errors import IncompleteRun
from .networks import NETWORK_NAMES
from .recurrence import RQA_FEATURE_NAMES, RecurrenceFeaturizer

FEATURE_FAMILIES = ("eigenvalues", "leading_eigenvector", "rqa")

_FLOAT_FMT = "{:.17g}"


@dataclass
class PipelineConfig:
    """Every stage's tunable, with the documented defaults."""

    tau: object = "auto"          # "auto" or int
    d_max: int = 12
    epsilon: float = 0.05
    max_lag: object = None        # None or int
    force_states: object = None   # None or int
    target_rate: float = 0.1
    l_min: int = 2
    v_min: int = 2
    shrinkage: float = 0.1
    edge_threshold: float = 0.2
    top_k: int = 10
    signed_edges: bool = False
    folds: int = 10
    trees: int = 400
    seed: int = 42
    per_fold_mean: bool = False
    render_size: int = 224
    render_limit: int = 2
    jobs: int = 1
    networks: object = None       # None (= all present) or list of names
    families: tuple = FEATURE_FAMILIES

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["families"] = list(self.families)
        if self.networks is not None:
            out["networks"] = list(self.networks)
        return out

    def config_hash(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("ascii")).hexdigest()

    def selected_networks(self, cohort):
        present = list(cohort.network_names)
        if self.networks is None:
            return present
        missing = [n for n in self.networks if n not in present]
        if missing:
            raise ValueError(f"networks not in dataset: {missing}")
        return list(self.networks)


_INT_FIELDS = {"d_max", "l_min", "v_min", "top_k", "folds", "trees", "seed",
               "render_size", "render_limit", "jobs"}
_FLOAT_FIELDS = {"epsilon", "target_rate", "shrinkage", "edge_threshold"}
_BOOL_FIELDS = {"signed_edges", "per_fold_mean"}
_OPTIONAL_INT_FIELDS = {"max_lag", "force_states"}


def _parse_config_value(key, value):
    value = value.strip()
    if key in _INT_FIELDS:
        return int(value)
    if key in _FLOAT_FIELDS:
        return float(value)
    if key in _BOOL_FIELDS:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key}: expected a boolean, got {value!r}")
    if key in _OPTIONAL_INT_FIELDS:
        return None if value.lower() in ("none", "auto", "") else int(value)
    if key == "tau":
        return "auto" if value.lower() == "auto" else int(value)
    if key == "networks":
        return None if value.lower() in ("all", "") else [
            v.strip() for v in value.split(",") if v.strip()
        ]
    if key == "families":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    raise ValueError(f"unknown config key: {key}")


def load_config(path=None, overrides=None):
    """Build a PipelineConfig from a flat key=value file plus CLI overrides.

    Unknown keys are rejected; overrides take precedence over the file.
    """
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    values = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, _, raw = line.partition("=")
                key = key.strip()
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _parse_config_value(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = (
            raw if not isinstance(raw, str) else _parse_config_value(key, raw)
        )
    cfg = PipelineConfig(**values)
    for family in cfg.families:
        if family not in FEATURE_FAMILIES:
            raise ValueError(f"unknown feature family {family!r}")
    return cfg


# --- recurrence-feature stage ------------------------------------------------

def _featurizer(config):
    return RecurrenceFeaturizer(
        tau=config.tau,
        d_max=config.d_max,
        epsilon=config.epsilon,
        target_rate=config.target_rate,
        l_min=config.l_min,
        v_min=config.v_min,
        force_states=config.force_states,
        max_lag=config.max_lag,
    )


def _subject_rqa_rows(args):
    subject_id, network_arrays, config = args
    featurizer = _featurizer(config)
    rows = []
    for network, (labels, matrix) in network_arrays.items():
        feats = featurizer.transform(matrix.T)
        for i, label in enumerate(labels):
            rows.append((subject_id, network, label) + tuple(feats[i]))
    return rows


def compute_rqa_features(cohort, config, networks=None):
    """RQA feature rows (subject, network, roi_label, rr..entr) per ROI."""
    networks = networks or config.selected_networks(cohort)
    payloads = []
    for subject in cohort.subjects:
        arrays = {
            net: (subject.roi_labels(net), subject.network_matrix(net))
            for net in networks
        }
        payloads.append((subject.subject_id, arrays, config))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            per_subject = list(pool.map(_subject_rqa_rows, payloads))
    else:
        per_subject = [_subject_rqa_rows(p) for p in payloads]
    return [row for rows in per_subject for row in rows]


def rqa_feature_table(rqa_rows, cohort, network):
    """Concatenate one network's per-ROI RQA vectors into subject rows."""
    by_subject = {}
    for row in rqa_rows:
        subject_id, net = row[0], row[1]
        if net != network:
            continue
        by_subject.setdefault(subject_id, []).extend(row[3:])
    features = np.array(
        [by_subject[s.subject_id] for s in cohort.subjects], dtype=np.float64
    )
    return classify_mod.FeatureTable(
        features=features,
        labels=cohort.labels(),
        provenance="rqa",
        network=network,
        subject_ids=[s.subject_id for s in cohort.subjects],
    )


# --- graph stage ----------------------------------------------------------

def compute_graphs(cohort, config, networks=None):
    """BrainGraph per (subject, network)."""
    networks = networks or config.selected_networks(cohort)
    graphs = {}
    for subject in cohort.subjects:
        for network in networks:
            graphs[(subject.subject_id, network)] = connectivity.build_graph(
                subject, network, shrinkage=config.shrinkage
            )
    return graphs


def eigen_feature_table(graphs, cohort, network, kind):
    rows = []
    for subject in cohort.subjects:
        feats = connectivity.eigen_features(graphs[(subject.subject_id, network)])
        rows.append(
            feats.eigenvalues if kind == "eigenvalues" else feats.leading_vector
        )
    return classify_mod.FeatureTable(
        features=np.vstack(rows),
        labels=cohort.labels(),
        provenance=kind,
        network=network,
        subject_ids=[s.subject_id for s in cohort.subjects],
    )


def frequency_rows(graphs, cohort, network, config):
    rankings = []
    for subject in cohort.subjects:
        rankings.append(
            connectivity.degree_and_rank(
                graphs[(subject.subject_id, network)],
                edge_threshold=config.edge_threshold,
                signed=config.signed_edges,
            )
        )
    roi_labels = cohort.subjects[0].roi_labels(network)
    return connectivity.top_roi_frequency(
        rankings, cohort.labels(), k=config.top_k, roi_labels=roi_labels
    )


# --- run directory ---------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_FLOAT_FMT.format(v) if isinstance(v, float) else v for v in row]
            )


def _read_feature_csv(path, meta_cols):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = []
        for row in reader:
            rows.append(tuple(row[:meta_cols]) + tuple(float(v) for v in row[meta_cols:]))
    return rows


def run_pipeline(data_root, out_dir, config=None, manifest=None):
    """Execute every stage into ``out_dir`` and return a summary dict.

    Re-running with an identical config resumes: finished stages are
    detected by their primary output file and skipped.  A config change
    against an existing run directory is an error (run directories are
    append-only).
    """
    config = config or PipelineConfig()
    os.makedirs(out_dir, exist_ok=True)
    timing = {}

    manifest_path = os.path.join(out_dir, "manifest.json")
    config_hash = config.config_hash()
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            existing = json.load(fh)
        if existing.get("config_hash") != config_hash:
            raise ValueError(
                f"run directory {out_dir} was created with a different config "
                f"(hash {existing.get('config_hash')}); use a fresh directory"
            )

    t0 = time.time()
    cohort = data.load_cohort(data_root, manifest=manifest)
    networks = config.selected_networks(cohort)
    timing["load"] = time.time() - t0

    with open(manifest_path, "w") as fh:
        json.dump(
            {
                "config": config.to_dict(),
                "config_hash": config_hash,
                "version": __version__,
                "n_subjects": len(cohort.subjects),
                "n_timepoints": cohort.n_timepoints,
                "networks": networks,
                "data_root": os.path.basename(os.path.normpath(os.fspath(data_root))),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    # validate stage
    validate_dir = os.path.join(out_dir, "validate")
    report_path = os.path.join(validate_dir, "report.json")
    if not os.path.exists(report_path):
        os.makedirs(validate_dir, exist_ok=True)
        report = data.validate_dataset(cohort)
        with open(report_path, "w") as fh:
            fh.write(report.to_json())
            fh.write("\n")

    # rqa stage
    rqa_dir = os.path.join(out_dir, "rqa")
    rqa_path = os.path.join(rqa_dir, "features.csv")
    t0 = time.time()
    if os.path.exists(rqa_path):
        rqa_rows = _read_feature_csv(rqa_path, meta_cols=3)
    else:
        os.makedirs(rqa_dir, exist_ok=True)
        rqa_rows = compute_rqa_features(cohort, config, networks)
        _write_csv(
            rqa_path,
            ("subject", "network", "roi") + RQA_FEATURE_NAMES,
            [tuple(r[:3]) + tuple(float(v) for v in r[3:]) for r in rqa_rows],
        )
    timing["rqa"] = time.time() - t0

    # plots stage
    plots_dir = os.path.join(out_dir, "plots")
    plots_list = os.path.join(plots_dir, "rendered.csv")
    t0 = time.time()
    if not os.path.exists(plots_list) and config.render_limit > 0:
        os.makedirs(plots_dir, exist_ok=True)
        featurizer = _featurizer(config)
        rendered = []
        for subject in cohort.subjects[: config.render_limit]:
            for network in networks:
                matrix = subject.network_matrix(network)
                for roi in range(matrix.shape[1]):
                    states = featurizer.embed(matrix[:, roi])
                    rm = recurrence.recurrence_matrix(states)
                    resized = recurrence.resize_bilinear(rm, size=config.render_size)
                    name = f"{subject.subject_id}_{network}_roi{roi:03d}.pgm"
                    recurrence.render_grayscale(
                        resized, os.path.join(plots_dir, name)
                    )
                    rendered.append((subject.subject_id, network, roi, name))
        _write_csv(plots_list, ("subject", "network", "roi", "file"), rendered)
    timing["plots"] = time.time() - t0

    # graph stage
    graph_dir = os.path.join(out_dir, "graph")
    freq_path = os.path.join(graph_dir, "frequency_table.csv")
    t0 = time.time()
    graphs = compute_graphs(cohort, config, networks)
    if not os.path.exists(freq_path):
        os.makedirs(os.path.join(graph_dir, "adjacency"), exist_ok=True)
        for (subject_id, network), graph in graphs.items():
            adj_path = os.path.join(
                graph_dir, "adjacency", f"{subject_id}_{network}.csv"
            )
            _write_csv(
                adj_path,
                graph.roi_labels,
                [tuple(float(v) for v in row) for row in graph.adjacency],
            )
        for network in networks:
            n_rois = graphs[(cohort.subjects[0].subject_id, network)].n_rois
            for kind, tag in (
                ("eigenvalues", "eigenvalues"),
                ("leading_eigenvector", "leading_eigenvector"),
            ):
                table = eigen_feature_table(graphs, cohort, network, kind)
                _write_csv(
                    os.path.join(graph_dir, f"features_{tag}_{network}.csv"),
                    ("subject", "label", "network", "feature_kind")
                    + tuple(f"f{i + 1}" for i in range(n_rois)),
                    [
                        (sid, int(lab), network, kind)
                        + tuple(float(v) for v in row)
                        for sid, lab, row in zip(
                            table.subject_ids, table.labels, table.features
                        )
                    ],
                )
        freq_rows_all = []
        for network in networks:
            for row in frequency_rows(graphs, cohort, network, config):
                freq_rows_all.append(
                    (
                        network,
                        row["label"],
                        row["roi_index"],
                        row["roi_label"],
                        row["count"],
                        row["class_size"],
                        float(row["fraction"]),
                    )
                )
        _write_csv(
            freq_path,
            ("network", "label", "roi_index", "roi_label", "count",
             "class_size", "fraction"),
            freq_rows_all,
        )
    timing["graph"] = time.time() - t0

    # classify stage
    classify_dir = os.path.join(out_dir, "classify")
    metrics_path = os.path.join(classify_dir, "metrics.csv")
    t0 = time.time()
    if not os.path.exists(metrics_path):
        os.makedirs(classify_dir, exist_ok=True)
        metrics_rows = []
        for network in networks:
            for family in config.families:
                if family == "rqa":
                    table = rqa_feature_table(rqa_rows, cohort, network)
                else:
                    table = eigen_feature_table(graphs, cohort, network, family)
                report = classify_mod.cross_validate(
                    table.features,
                    table.labels,
                    folds=config.folds,
                    n_trees=config.trees,
                    seed=config.seed,
                    per_fold_mean=config.per_fold_mean,
                )
                out_path = os.path.join(
                    classify_dir, f"metrics_{network}_{family}.json"
                )
                with open(out_path, "w") as fh:
                    fh.write(report.to_json())
                    fh.write("\n")
                metrics_rows.append(
                    (
                        network,
                        family,
                        float(report.precision),
                        float(report.recall),
                        float(report.f1),
                        float(report.accuracy),
                    )
                )
        _write_csv(
            metrics_path,
            ("network", "family", "precision", "recall", "f1", "accuracy"),
            metrics_rows,
        )
    timing["classify"] = time.time() - t0

    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {
        "out_dir": out_dir,
        "config_hash": config_hash,
        "networks": networks,
        "n_subjects": len(cohort.subjects),
    }


# --- reporting -------------------------------------------------------------

def report(run_dir, fmt="text", top_rows=10):
    """Summarize a finished run: per-network metrics and top-ROI table.

    Returns the formatted string; raises IncompleteRun when the classify
    stage is missing.
    """
    metrics_path = os.path.join(run_dir, "classify", "metrics.csv")
    freq_path = os.path.join(run_dir, "graph", "frequency_table.csv")
    if not os.path.exists(metrics_path):
        raise IncompleteRun(f"{run_dir}: classify stage has not run")
    with open(metrics_path, newline="") as fh:
        metric_rows = list(csv.DictReader(fh))
    freq_rows = []
    if os.path.exists(freq_path):
        with open(freq_path, newline="") as fh:
            freq_rows = list(csv.DictReader(fh))

    if fmt == "csv":
        lines = ["network,family,precision,recall,f1,accuracy"]
        for row in metric_rows:
            lines.append(
                "{network},{family},{precision},{recall},{f1},{accuracy}".format(**row)
            )
        lines.append("")
        lines.append("network,label,roi_index,roi_label,count,class_size,fraction")
        for row in freq_rows:
            lines.append(
                "{network},{label},{roi_index},{roi_label},{count},"
                "{class_size},{fraction}".format(**row)
            )
        return "\n".join(lines)

    families = sorted({row["family"] for row in metric_rows})
    lines = []
    for family in families:
        lines.append(f"== Classification ({family}) ==")
        lines.append(
            f"{'Network':<18} {'Precision':>9} {'Recall':>9} {'F1':>9} {'Accuracy':>9}"
        )
        for row in metric_rows:
            if row["family"] != family:
                continue
            lines.append(
                f"{row['network']:<18} {float(row['precision']):>9.2f} "
                f"{float(row['recall']):>9.2f} {float(row['f1']):>9.2f} "
                f"{100.0 * float(row['accuracy']):>8.2f}%"
            )
        lines.append("")
    if freq_rows:
        lines.append("== Top ROIs by degree (fraction of subjects with ROI in top-k) ==")
        networks = []
        for row in freq_rows:
            if row["network"] not in networks:
                networks.append(row["network"])
        for network in networks:
            lines.append(f"-- {network} --")
            lines.append(
                f"{'class':<6} {'ROI no.':>7} {'ROI':<12} {'Fraction of subj.':>18}"
            )
            for label in ("0", "1"):
                shown = 0
                for row in freq_rows:
                    if row["network"] != network or row["label"] != label:
                        continue
                    if shown >= top_rows:
                        break
                    lines.append(
                        f"{row['label']:<6} {row['roi_index']:>7} "
                        f"{row['roi_label']:<12} "
                        f"{row['count']:>8}/{row['class_size']}"
                    )
                    shown += 1
            lines.append("")
    return "\n".join(lines)
