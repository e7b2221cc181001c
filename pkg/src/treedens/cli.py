"""``treedens`` command line: fit, sample, eval, experiment, synth.

Exit codes: 0 success (and all thresholds met), 1 threshold failure,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

from . import kernels
from .density import ModelFormatError, fit_tree_density, load_model, root_and_order, sample, save_model
from .evaluation import ModelTruth, identification_experiment, l1_distance_grid, l1_distance_mc, rate_experiment
from .histograms import DataError, Partition1D, default_columns, read_csv, write_csv
from .mi import check_bin_widths, default_bin_widths, mi_matrix, read_mask
from .trees import SpanningTree, max_spanning_tree, mi_gap
from .truth import truth_from_dict

EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel workers; outputs do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treedens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="select a tree from data and fit the tree density")
    p.add_argument("--input", required=True, help="data CSV")
    p.add_argument("--output", required=True, help="model JSON to write")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--c1", type=float, default=1.0, help="density bin width h = c1 n^-1/4")
    p.add_argument("--c2", type=float, default=1.0, help="MI bin width h' = c2 n^-1/4")
    p.add_argument("--h", type=float, help="explicit density bin width")
    p.add_argument("--h-prime", type=float, help="explicit MI bin width")
    p.add_argument("--root", type=int, help="root vertex (1-based); default max degree")
    p.add_argument("--mask", help="candidate edges file of 'i j' lines (1-based)")
    p.add_argument("--mi-output", help="write the MI estimates as CSV")
    p.add_argument("--tree-output", help="write the chosen tree as an edge list")
    _common(p)

    p = sub.add_parser("sample", help="draw points from a fitted model")
    p.add_argument("--input", "--model", dest="input", required=True, help="model JSON")
    p.add_argument("--output", required=True, help="CSV to write")
    p.add_argument("-m", "--count", type=int, required=True)
    _common(p)

    p = sub.add_parser("eval", help="L1 distance between a model and a truth or second model")
    p.add_argument("--input", "--model", dest="input", required=True, help="model JSON")
    ref = p.add_mutually_exclusive_group(required=True)
    ref.add_argument("--truth", help="ground-truth JSON (as written by synth)")
    ref.add_argument("--reference", help="second model JSON")
    p.add_argument("--method", choices=["mc", "grid"], default="mc")
    p.add_argument("-m", "--count", type=int, default=100_000, help="Monte Carlo samples")
    p.add_argument("--output", help="write the report as JSON")
    _common(p)

    p = sub.add_parser("experiment", help="run an experiment spec (file or bundled name)")
    p.add_argument("--input", "--spec", dest="input", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("synth", help="sample a synthetic dataset from a ground truth")
    p.add_argument("--family", choices=["fgm", "independence"], default="fgm")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--tree", default="chain", help="'chain', 'star' or an edge-list file")
    p.add_argument("--coupling", type=float, nargs="+", default=[0.5],
                   help="one value for all edges, or one per (sorted) edge")
    p.add_argument("-n", "--count", type=int, required=True)
    p.add_argument("--output", required=True, help="CSV to write")
    p.add_argument("--truth-output", help="truth JSON (default: <output>.truth.json)")
    _common(p)
    return parser


def _resolve_widths(args, n):
    h_def, hp_def = default_bin_widths(n, args.c1, args.c2, warn=False)
    h = args.h if args.h is not None else h_def
    hp = args.h_prime if args.h_prime is not None else hp_def
    if h <= 0 or hp <= 0:
        raise UsageError("bin widths must be positive")
    check_bin_widths(n, h, hp)
    return h, hp


def cmd_fit(args) -> int:
    timings = {}
    t0 = time.perf_counter()
    data = read_csv(args.input, has_header=args.has_header)
    timings["read"] = time.perf_counter() - t0
    h, hp = _resolve_widths(args, data.n)
    mask = read_mask(args.mask, data.d) if args.mask else None

    t0 = time.perf_counter()
    mi = mi_matrix(data, Partition1D(hp), mask=mask, workers=args.workers)
    timings["histograms+mi"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    tree = max_spanning_tree(mi)
    timings["kruskal"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    root = None if args.root is None else args.root - 1
    model = fit_tree_density(data, root_and_order(tree, root), Partition1D(h))
    timings["fit"] = time.perf_counter() - t0

    provenance = {
        "command": "fit",
        "config": {"has_header": args.has_header, "c1": args.c1, "c2": args.c2, "h": h, "h_prime": hp,
                   "root": args.root, "seed": args.seed,
                   "mask": None if mask is None else [[i + 1, j + 1] for i, j in mask]},
        "input_sha256": file_digest(args.input),
    }
    save_model(model, args.output, provenance)
    if args.mi_output:
        mi.to_csv(args.mi_output)
    if args.tree_output:
        tree.write(args.tree_output)

    print("tree:")
    print(tree.to_text(), end="")
    print(f"h = {h!r}\nh' = {hp!r}")
    if len(mi.edges) > 1:
        gap = mi_gap(mi)
        print(f"mi gap delta = {gap.delta!r}, tied pairs = {gap.tied_pairs}")
    print(f"root (original label) = {model.order.root_original + 1}")
    print("timings [s]: " + ", ".join(f"{k}={v:.4f}" for k, v in timings.items()) + f" (backend {kernels.BACKEND_NAME})")
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.count < 0:
        raise UsageError("-m must be >= 0")
    model = load_model(args.input)
    x = sample(model, args.count, args.seed, workers=args.workers)
    write_csv(args.output, x, default_columns(model.d))
    meta = {"command": "sample", "config": {"m": args.count, "seed": args.seed},
            "model_sha256": file_digest(args.input)}
    Path(str(args.output) + ".meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    return EXIT_OK


def _load_reference(args):
    if args.truth:
        return truth_from_dict(json.loads(Path(args.truth).read_text())), args.truth
    return ModelTruth(load_model(args.reference)), args.reference


def cmd_eval(args) -> int:
    model = load_model(args.input)
    ref, ref_path = _load_reference(args)
    if ref.d != model.d:
        raise UsageError(f"dimension mismatch: model d={model.d}, reference d={ref.d}")
    if args.method == "grid":
        if model.d > 3:
            raise UsageError("grid method supports d <= 3")
        value, se = l1_distance_grid(model, ref), None
    else:
        est = l1_distance_mc(model, ref, args.count, args.seed)
        value, se = est.value, est.se
    report = {
        "method": args.method,
        "l1": value,
        "se": se,
        "m": args.count if args.method == "mc" else None,
        "seed": args.seed,
        "model_sha256": file_digest(args.input),
        "reference_sha256": file_digest(ref_path),
    }
    print(f"L1 = {value!r}" + (f" +/- {se!r} (1 s.e.)" if se is not None else ""))
    print(f"method = {args.method}")
    print(f"model sha256 = {report['model_sha256']}\nreference sha256 = {report['reference_sha256']}")
    if args.output:
        Path(args.output).write_text(json.dumps(report, indent=1) + "\n")
    return EXIT_OK


def load_experiment_spec(name_or_path: str) -> dict:
    path = Path(name_or_path)
    if path.exists():
        return json.loads(path.read_text())
    bundled = resources.files("treedens") / "specs" / f"{name_or_path}.json"
    if bundled.is_file():
        return json.loads(bundled.read_text())
    raise UsageError(f"no experiment spec file or bundled spec named {name_or_path!r}")


def _check_thresholds(kind, report, thresholds) -> list[dict]:
    checks = []

    def add(name, ok, value):
        checks.append({"kind": kind, "check": name, "passed": bool(ok), "value": value})

    for key, want in thresholds.items():
        if kind == "identification" and key == "final_frequency_min":
            add(key, report.frequencies[-1] >= want, report.frequencies[-1])
        elif kind == "identification" and key == "frequency_min":
            add(key, min(report.frequencies) >= want, report.frequencies)
        elif kind == "identification" and key == "frequency_nondecreasing":
            f = report.frequencies
            add(key, all(b >= a for a, b in zip(f, f[1:])) == bool(want), f)
        elif kind == "identification" and key == "l1_median_decreasing":
            m = report.l1_medians
            add(key, all(b < a for a, b in zip(m, m[1:])) == bool(want), m)
        elif kind == "rate" and key == "slope_band":
            lo, hi = want
            add(key, lo <= report.slope <= hi, report.slope)
        else:
            raise UsageError(f"unknown threshold {key!r} for {kind} experiment")
    return checks


def cmd_experiment(args) -> int:
    spec = load_experiment_spec(args.input)
    try:
        gt = truth_from_dict(spec["truth"])
        experiments = spec["experiments"]
        name = spec.get("name", Path(args.input).stem)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"invalid experiment spec: missing {exc}") from None
    seed = spec.get("seed", 0) if args.seed is None else args.seed
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    checks = []
    for k, ex in enumerate(experiments):
        kind = ex.get("kind")
        kw = dict(n_grid=ex["n_grid"], reps=ex.get("reps", 10), c1=ex.get("c1", 1.0), c2=ex.get("c2", 1.0),
                  seed=seed, mc_samples=ex.get("mc_samples", 100_000), workers=args.workers)
        if kind == "identification":
            report = identification_experiment(gt, **kw)
        elif kind == "rate":
            report = rate_experiment(gt, **kw)
        else:
            raise UsageError(f"unknown experiment kind {kind!r}")
        stem = out / f"{name}-{k}-{kind}"
        Path(str(stem) + ".csv").write_text(report.to_csv())
        Path(str(stem) + ".json").write_text(report.to_json())
        checks += _check_thresholds(kind, report, ex.get("thresholds", {}))
    passed = all(c["passed"] for c in checks)
    (out / f"{name}-checks.json").write_text(json.dumps({"spec": spec, "seed": seed, "passed": passed,
                                                          "checks": checks}, indent=1) + "\n")
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['kind']}:{c['check']} value={c['value']}")
    return EXIT_OK if passed else EXIT_THRESHOLD


def cmd_synth(args) -> int:
    if args.count < 0:
        raise UsageError("-n must be >= 0")
    doc = {"family": args.family, "d": args.d, "seed": args.seed}
    if args.family == "fgm":
        if args.tree in ("chain", "star"):
            doc["tree"] = args.tree
        else:
            t = SpanningTree.from_text(Path(args.tree).read_text(), args.d)
            doc["tree"] = [[i + 1, j + 1] for i, j in t.edges]
        doc["couplings"] = args.coupling[0] if len(args.coupling) == 1 else list(args.coupling)
    gt = truth_from_dict(doc)
    x = gt.sample(args.count, args.seed, workers=args.workers)
    write_csv(args.output, x, default_columns(gt.d))
    truth_path = args.truth_output or str(args.output) + ".truth.json"
    truth = gt.to_dict()
    truth["provenance"] = {"command": "synth", "config": {"n": args.count, "seed": args.seed, **doc},
                           "data_sha256": file_digest(args.output)}
    Path(truth_path).write_text(json.dumps(truth, indent=1) + "\n")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "sample": cmd_sample, "eval": cmd_eval, "experiment": cmd_experiment, "synth": cmd_synth}


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.showwarning = _show_warning
            return COMMANDS[args.command](args)
    except (UsageError, DataError, ModelFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
