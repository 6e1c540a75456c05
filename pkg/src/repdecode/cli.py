"""Command-line entry point: ``repdecode {synth,decode,eval,crossmodel}``.

Every stage reads files and writes files under ``--out``; the last file a
stage writes is ``run.json`` (a run record listing every output and its
SHA-256), so its presence marks a completed stage.

Exit codes: 0 success, 1 invalid input, 2 world-spec validation failure,
3 decoder job failure, 4 incomplete prediction grid.
"""

import argparse
import dataclasses
import hashlib
import json
from pathlib import Path
import sys
import time

from . import __version__
from .crossmodel import pairwise_predictivity
from .decoder import GridError, load_prediction_set, prediction_path, run_grid, save_predictions
from .matrixio import ManifestError, MatrixFormatError, load_manifest
from .rankeval import mean_average_rank, rank_csv_text, save_report, summary_csv_text
from .ridge import RidgeConfig
from .synth import WorldSpecError, load_worldspec, write_world

EXIT_INVALID = 1
EXIT_SPEC = 2
EXIT_DECODE = 3
EXIT_INCOMPLETE = 4


class StageError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_record(out_dir, stage, outputs, seed, timings, manifest_path=None, reproducible=False):
    out_dir = Path(out_dir)
    record = {
        "toolkit_version": __version__,
        "stage": stage,
        "manifest_digest": sha256_file(manifest_path) if manifest_path else None,
        "seed": seed,
        "timings": {k: (0.0 if reproducible else round(v, 6)) for k, v in timings.items()},
        "outputs": [
            {"path": str(Path(p).relative_to(out_dir)), "sha256": sha256_file(p)}
            for p in outputs
        ],
    }
    path = out_dir / "run.json"
    path.write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")
    return path


def verify_run_record(path):
    """Return the list of outputs that are missing or whose digest changed."""
    path = Path(path)
    record = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for entry in record["outputs"]:
        p = path.parent / entry["path"]
        if not p.exists() or sha256_file(p) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


def _load_manifest(path):
    try:
        return load_manifest(path)
    except (OSError, ManifestError) as exc:
        raise StageError(f"cannot read manifest {path}: {exc}", EXIT_INVALID) from None


def cmd_synth(args):
    t0 = time.perf_counter()
    try:
        spec = load_worldspec(args.spec)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    except WorldSpecError as exc:
        raise StageError(f"invalid world spec: {exc}", EXIT_SPEC) from None
    except OSError as exc:
        raise StageError(f"cannot read world spec: {exc}", EXIT_SPEC) from None
    out = Path(args.out)
    written = write_world(spec, out, format=args.format)
    write_run_record(out, "synth", written, spec.seed, {"synth": time.perf_counter() - t0},
                     manifest_path=written[-1], reproducible=args.reproducible)
    print(f"wrote {len(written) - 1} matrices and {written[-1]}")


def cmd_decode(args):
    manifest = _load_manifest(args.manifest)
    seed = manifest.eval.seed if args.seed is None else args.seed
    folds = manifest.eval.folds if args.folds is None else args.folds
    t0 = time.perf_counter()
    try:
        results = run_grid(manifest, workers=args.workers, mode=args.mode, folds=folds, seed=seed)
    except GridError as exc:
        who = exc.subject_id or exc.model_id
        raise StageError(
            f"decoder grid failed at subject={exc.subject_id} model={exc.model_id} "
            f"({who}): {exc}", EXIT_DECODE,
        ) from None
    except (ValueError, ArithmeticError) as exc:
        raise StageError(f"decoder grid failed: {exc}", EXIT_DECODE) from None
    t1 = time.perf_counter()
    out = Path(args.out)
    written = save_predictions(results, out, seed, folds)
    write_run_record(out, "decode", written, seed,
                     {"decode": t1 - t0, "write": time.perf_counter() - t1},
                     manifest_path=args.manifest, reproducible=args.reproducible)
    print(f"wrote {len(results)} prediction sets to {out}")


def cmd_eval(args):
    manifest = _load_manifest(args.manifest)
    pred_dir = Path(args.predictions)
    meta_path = pred_dir / "metadata.json"
    if not meta_path.exists():
        raise StageError(f"no metadata.json in {pred_dir}", EXIT_INCOMPLETE)
    metadata = json.loads(meta_path.read_text(encoding="utf-8"))
    have = {(p["subject_id"], p["model_id"]) for p in metadata["pairs"]}
    missing = []
    for sid, _ in manifest.subjects:
        for mid, _ in manifest.models:
            if (sid, mid) not in have or not prediction_path(pred_dir, sid, mid).exists():
                missing.append(f"({sid}, {mid})")
    if missing:
        raise StageError(f"incomplete prediction grid, missing {', '.join(missing)}", EXIT_INCOMPLETE)
    B = manifest.eval.bootstrap if args.bootstrap is None else args.bootstrap
    seed = manifest.eval.seed if args.seed is None else args.seed
    out = Path(args.out)
    t0 = time.perf_counter()
    reports = []
    written = []
    try:
        for mid, _ in manifest.models:
            candidates = manifest.load_model(mid)
            preds = [load_prediction_set(pred_dir, sid, mid, metadata) for sid, _ in manifest.subjects]
            report = mean_average_rank(preds, candidates, bootstrap=B, seed=seed)
            reports.append(report)
            rpath = out / "reports" / f"{mid}.json"
            save_report(report, rpath)
            cpath = out / "ranks" / f"{mid}.csv"
            cpath.parent.mkdir(parents=True, exist_ok=True)
            cpath.write_text(rank_csv_text(report), encoding="utf-8")
            written += [rpath, cpath]
    except (OSError, MatrixFormatError, ValueError) as exc:
        raise StageError(f"evaluation failed: {exc}", EXIT_INVALID) from None
    summary = out / "summary.csv"
    summary.write_text(summary_csv_text(reports), encoding="utf-8")
    written.append(summary)
    write_run_record(out, "eval", written, seed, {"eval": time.perf_counter() - t0},
                     manifest_path=args.manifest, reproducible=args.reproducible)
    print(summary.read_text(encoding="utf-8"), end="")


def cmd_crossmodel(args):
    manifest = _load_manifest(args.manifest)
    ev = manifest.eval
    seed = ev.seed if args.seed is None else args.seed
    t0 = time.perf_counter()
    try:
        models = [(mid, manifest.load_model(mid)) for mid, _ in manifest.models]
        result = pairwise_predictivity(
            models, RidgeConfig(ev.alpha_grid, ev.standardize, ev.solver_policy),
            mode=args.mode, folds=args.folds or ev.inner_folds, seed=seed,
            alpha_policy=args.alpha_policy, inner_folds=ev.inner_folds, workers=args.workers,
        )
    except (OSError, MatrixFormatError, ValueError, ArithmeticError) as exc:
        raise StageError(f"cross-model analysis failed: {exc}", EXIT_INVALID) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "predictivity.csv"
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    svg_path = out / "predictivity.svg"
    svg_path.write_text(result.to_svg(reproducible=args.reproducible), encoding="utf-8")
    write_run_record(out, "crossmodel", [csv_path, svg_path], seed,
                     {"crossmodel": time.perf_counter() - t0},
                     manifest_path=args.manifest, reproducible=args.reproducible)
    print(result.to_csv(), end="")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory for this stage")
    common.add_argument("--seed", type=int, default=None, help="override the manifest/spec seed")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("--reproducible", action="store_true",
                        help="zero timings and omit timestamps so reruns are byte-identical")

    parser = argparse.ArgumentParser(prog="repdecode", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic world")
    p.add_argument("spec", help="world spec JSON")
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decode", parents=[common], help="train the subject x model decoder grid")
    p.add_argument("manifest")
    p.add_argument("--mode", choices=("cross_validated", "in_sample"), default=None)
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[common], help="rank-score predictions and summarize MAR")
    p.add_argument("predictions", help="directory written by 'decode'")
    p.add_argument("manifest")
    p.add_argument("--bootstrap", type=int, default=None, help="bootstrap replicates")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossmodel", parents=[common], help="pairwise model r2 heatmap")
    p.add_argument("manifest")
    p.add_argument("--mode", choices=("in_sample", "cross_validated"), default="in_sample")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--alpha-policy", choices=("cv", "min"), default="cv")
    p.set_defaults(func=cmd_crossmodel)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except StageError as exc:
        print(f"repdecode {args.command}: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
