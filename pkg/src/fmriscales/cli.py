"""Command-line interface.

Subcommands: synth, validate, reho, embed, rqa, rp-render, graph, classify,
run, report.  Failures exit nonzero with a machine-parseable JSON error on
stderr.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import classify as classify_mod
from . import connectivity, data, embedding, pipeline, recurrence, reho, synth
from .errors import FmriscalesError


def _add_data_arg(parser):
    parser.add_argument("--data", required=True, help="cohort root directory")


def _load_series_csv(path):
    """One series: a single-column CSV (optional non-numeric header)."""
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if values:
                    raise
    return np.asarray(values, dtype=np.float64)


def _cmd_synth(args):
    if args.kind == "two_class_cohort":
        cohort = synth.gen_two_class_cohort(
            separation=args.sep,
            subjects_per_class=args.subjects,
            n_timepoints=args.n_timepoints,
            n_rois=args.n,
            seed=args.seed,
            all_networks=args.all_networks,
        )
        data.write_cohort(cohort, args.out)
        print(
            json.dumps(
                {
                    "out": args.out,
                    "subjects": len(cohort.subjects),
                    "n_timepoints": cohort.n_timepoints,
                    "networks": list(cohort.network_names),
                    "diagonal_loading": getattr(cohort, "diagonal_loading", 0.0),
                }
            )
        )
        return 0
    spec = synth.GeneratorSpec(
        kind=args.kind, n_samples=args.n_timepoints, seed=args.seed
    )
    ts = synth.gen_signal(spec)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        for v in ts.values:
            writer.writerow([f"{v:.17g}"])
    print(json.dumps({"out": args.out, "kind": args.kind, "n": int(ts.values.size)}))
    return 0


def _cmd_validate(args):
    cohort = data.load_cohort(args.data)
    report = data.validate_dataset(cohort)
    print(report.to_json())
    return 0


def _cmd_reho(args):
    block = reho.load_voxel_block(args.block, region_id=args.region_id)
    rmap = reho.reho_map(block, include_center=not args.neighbors_only)
    if args.out_map:
        reho.write_reho_map(rmap, args.out_map)
    representative = reho.select_representative(block, rmap)
    if args.out_series:
        with open(args.out_series, "w", newline="") as fh:
            writer = csv.writer(fh)
            for v in representative.values:
                writer.writerow([f"{v:.17g}"])
    defined = int(rmap.defined.sum())
    print(
        json.dumps(
            {
                "dims": list(rmap.dims),
                "defined_voxels": defined,
                "mean_w": float(rmap.w[rmap.defined].mean()) if defined else 0.0,
                "out_map": args.out_map,
                "out_series": args.out_series,
            }
        )
    )
    return 0


def _cmd_embed(args):
    series = _load_series_csv(args.series)
    tau = embedding.select_delay(series, max_lag=args.max_lag) \
        if args.tau == "auto" else int(args.tau)
    curve = embedding.cao_curves(series, tau, d_max=args.dmax)
    m, saturated = embedding.choose_dimension(curve.e1, epsilon=args.epsilon)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["d", "e1", "e2"])
            for i in range(curve.e1.size):
                writer.writerow([i + 1, f"{curve.e1[i]:.17g}", f"{curve.e2[i]:.17g}"])
    params = embedding.EmbeddingParams(m=m, tau=tau, k=series.size - (m - 1) * tau)
    print(
        json.dumps(
            {
                "tau": params.tau,
                "m": params.m,
                "k": params.k,
                "saturation_found": saturated,
                "curve_csv": args.out,
            }
        )
    )
    return 0


def _rqa_config(args):
    overrides = {}
    for key in ("tau", "dmax", "epsilon", "rr", "lmin", "vmin", "force_k", "jobs"):
        value = getattr(args, key, None)
        if value is None:
            continue
        overrides[
            {
                "dmax": "d_max",
                "rr": "target_rate",
                "lmin": "l_min",
                "vmin": "v_min",
                "force_k": "force_states",
                "tau": "tau",
                "epsilon": "epsilon",
                "jobs": "jobs",
            }[key]
        ] = value
    return pipeline.load_config(overrides=overrides)


def _cmd_rqa(args):
    cohort = data.load_cohort(args.data)
    config = _rqa_config(args)
    if args.network:
        config.networks = [args.network]
    rows = pipeline.compute_rqa_features(cohort, config)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("subject", "network", "roi") + recurrence.RQA_FEATURE_NAMES)
        for row in rows:
            writer.writerow(list(row[:3]) + [f"{float(v):.17g}" for v in row[3:]])
    print(json.dumps({"out": args.out, "rows": len(rows)}))
    return 0


def _cmd_rp_render(args):
    cohort = data.load_cohort(args.data)
    config = _rqa_config(args)
    featurizer = pipeline._featurizer(config)
    os.makedirs(args.out, exist_ok=True)
    subjects = [s for s in cohort.subjects if not args.subject or s.subject_id == args.subject]
    if args.subject and not subjects:
        raise ValueError(f"subject {args.subject!r} not in cohort")
    networks = [args.network] if args.network else list(cohort.network_names)
    written = 0
    for subject in subjects[: args.limit] if args.limit else subjects:
        for network in networks:
            matrix = subject.network_matrix(network)
            for roi in range(matrix.shape[1]):
                states = featurizer.embed(matrix[:, roi])
                rm = recurrence.recurrence_matrix(states)
                resized = recurrence.resize_bilinear(rm, size=args.size)
                name = f"{subject.subject_id}_{network}_roi{roi:03d}.pgm"
                recurrence.render_grayscale(resized, os.path.join(args.out, name))
                written += 1
    print(json.dumps({"out": args.out, "images": written}))
    return 0


def _cmd_graph(args):
    cohort = data.load_cohort(args.data)
    config = pipeline.load_config(
        overrides={
            "shrinkage": args.shrinkage,
            "edge_threshold": args.edge_threshold,
            "top_k": args.topk,
            "signed_edges": args.signed,
        }
    )
    if args.network:
        config.networks = [args.network]
    networks = config.selected_networks(cohort)
    graphs = pipeline.compute_graphs(cohort, config, networks)
    os.makedirs(args.out, exist_ok=True)
    for (subject_id, network), graph in graphs.items():
        path = os.path.join(args.out, f"adjacency_{subject_id}_{network}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(graph.roi_labels)
            for row in graph.adjacency:
                writer.writerow([f"{v:.17g}" for v in row])
    freq_rows = []
    for network in networks:
        for row in pipeline.frequency_rows(graphs, cohort, network, config):
            freq_rows.append((network,) + tuple(row.values()))
    with open(os.path.join(args.out, "frequency_table.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("network", "label", "roi_index", "roi_label", "count",
             "class_size", "fraction")
        )
        for row in freq_rows:
            writer.writerow(row)
    print(json.dumps({"out": args.out, "graphs": len(graphs)}))
    return 0


def _cmd_classify(args):
    cohort = data.load_cohort(args.data)
    config = pipeline.load_config(
        overrides={
            "folds": args.folds,
            "trees": args.trees,
            "seed": args.seed,
            "per_fold_mean": args.per_fold_mean,
            "shrinkage": args.shrinkage,
        }
    )
    family = {"eigvec": "leading_eigenvector", "eigval": "eigenvalues",
              "rqa": "rqa"}[args.features]
    if family == "rqa":
        rows = pipeline.compute_rqa_features(cohort, config, [args.network])
        table = pipeline.rqa_feature_table(rows, cohort, args.network)
    else:
        graphs = pipeline.compute_graphs(cohort, config, [args.network])
        table = pipeline.eigen_feature_table(graphs, cohort, args.network, family)
    report = classify_mod.cross_validate(
        table.features,
        table.labels,
        folds=config.folds,
        n_trees=config.trees,
        seed=config.seed,
        per_fold_mean=config.per_fold_mean,
    )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
            fh.write("\n")
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["network", "family", "precision", "recall", "f1", "accuracy"]
            )
            writer.writerow(
                [args.network, family]
                + [f"{float(v):.17g}" for v in
                   (report.precision, report.recall, report.f1, report.accuracy)]
            )
    print(report.to_json())
    return 0


def _cmd_run(args):
    overrides = {}
    for spec in args.set or []:
        if "=" not in spec:
            raise ValueError(f"--set expects key=value, got {spec!r}")
        key, _, value = spec.partition("=")
        overrides[key.strip()] = value
    if args.only:
        key, _, value = args.only.partition("=")
        if key.strip() != "network" or not value:
            raise ValueError("--only expects network=<name>")
        overrides["networks"] = value
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = pipeline.load_config(path=args.config, overrides=overrides)
    summary = pipeline.run_pipeline(args.data, args.out, config=config)
    print(json.dumps(summary))
    return 0


def _cmd_report(args):
    print(pipeline.report(args.run, fmt=args.format))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fmriscales",
        description="Two-scale fMRI ROI time-series analysis: recurrence "
        "dynamics per ROI, partial-correlation graphs per network, and a "
        "bagged decision-tree classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic signals or cohorts")
    p.add_argument("--kind", default="two_class_cohort",
                   choices=list(synth.SIGNAL_KINDS) + ["two_class_cohort"])
    p.add_argument("--sep", type=float, default=0.8)
    p.add_argument("--subjects", type=int, default=50)
    p.add_argument("--n", type=int, default=34, help="ROI count")
    p.add_argument("--N", dest="n_timepoints", type=int, default=190)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--all-networks", action="store_true",
                   help="emit all six networks (hub structure in the one "
                        "matching --n)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="validate a cohort and print a report")
    _add_data_arg(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("reho", help="voxel-block concordance map and "
                                    "representative series")
    p.add_argument("--block", required=True, help="voxel CSV (x,y,z,samples...)")
    p.add_argument("--region-id", default="")
    p.add_argument("--neighbors-only", action="store_true",
                   help="score voxels by their 26 neighbors, excluding the center")
    p.add_argument("--out-map", default=None)
    p.add_argument("--out-series", default=None)
    p.set_defaults(func=_cmd_reho)

    p = sub.add_parser("embed", help="delay/dimension selection for one series")
    p.add_argument("--series", required=True, help="single-column CSV")
    p.add_argument("--tau", default="auto")
    p.add_argument("--dmax", type=int, default=12)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--out", default=None, help="write the d,e1,e2 curve CSV")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("rqa", help="per-ROI recurrence features for a cohort")
    _add_data_arg(p)
    p.add_argument("--network", default=None)
    p.add_argument("--tau", default=None)
    p.add_argument("--dmax", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--rr", type=float, default=None, help="target recurrence rate")
    p.add_argument("--lmin", type=int, default=None)
    p.add_argument("--vmin", type=int, default=None)
    p.add_argument("--force-k", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rqa)

    p = sub.add_parser("rp-render", help="render recurrence plots as PGM images")
    _add_data_arg(p)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--subject", default=None)
    p.add_argument("--network", default=None)
    p.add_argument("--limit", type=int, default=None, help="max subjects")
    p.add_argument("--tau", default=None)
    p.add_argument("--force-k", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rp_render)

    p = sub.add_parser("graph", help="partial-correlation graphs and ROI rankings")
    _add_data_arg(p)
    p.add_argument("--network", default=None)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--edge-threshold", type=float, default=0.2)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--signed", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("classify", help="cross-validated classification of one "
                                        "network and feature family")
    _add_data_arg(p)
    p.add_argument("--features", required=True, choices=["eigvec", "eigval", "rqa"])
    p.add_argument("--network", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--trees", type=int, default=400)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--per-fold-mean", action="store_true")
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--out", default=None, help="write the metrics JSON")
    p.add_argument("--out-csv", default=None,
                   help="write a network,family,precision,recall,f1,accuracy row")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("run", help="full pipeline into a run directory")
    _add_data_arg(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--only", default=None, metavar="network=<name>")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="summarize a finished run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--format", default="text", choices=["text", "csv"])
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FmriscalesError, ValueError, OSError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
