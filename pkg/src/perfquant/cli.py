"""Command-line front-end.

Subcommands wire the pipeline end to end: ``synth`` writes a labelled
synthetic cohort, ``fit`` estimates model parameters for every region in a
manifest, ``features`` exports the signature table, ``train`` fits the
region classifier on a whole cohort, ``evaluate`` runs leave-one-patient-out
evaluation and writes the report, and ``inspect`` fits a single region and
emits plot-ready columns.  All commands are deterministic given the same
config and seed and never modify their inputs.

Exit codes: 0 success, 1 partial processing failure, 2 bad input or config,
3 region rejected by quality filtering (inspect only).
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import classify, fitter, ingest, pipeline, signature, synth
from .config import RunConfig, load_config
from .errors import PerfquantError
from .model import response

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_BAD_INPUT = 2
EXIT_NO_PREDICTION = 3


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON run configuration (defaults used otherwise)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker processes for batch fitting")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory")


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)
    return config


def build_parser():
    parser = argparse.ArgumentParser(
        prog="perfquant",
        description="Perfusion quantification and tissue classification "
                    "from fluorescence intensity time-series.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled cohort")
    _add_common(p)
    p.add_argument("--patients", type=int, default=20)
    p.add_argument("--rois", type=int, default=20)
    p.add_argument("--cancer", type=int, default=None,
                   help="number of cancer patients (default: 40%%)")
    p.add_argument("--overlap", action="store_true",
                   help="use overlapping class profiles (harder cohort)")
    p.add_argument("--noise", type=float, default=0.02,
                   help="noise std as a fraction of the series peak")

    p = sub.add_parser("fit", help="fit every region in a cohort manifest")
    _add_common(p)
    p.add_argument("manifest", type=Path)

    p = sub.add_parser("features", help="fit a cohort and export signatures")
    _add_common(p)
    p.add_argument("manifest", type=Path)

    p = sub.add_parser("train", help="train the region classifier on a cohort")
    _add_common(p)
    p.add_argument("manifest", type=Path)
    p.add_argument("--scheme", choices=classify.SCHEMES, default=None)

    p = sub.add_parser("evaluate", help="leave-one-patient-out evaluation")
    _add_common(p)
    p.add_argument("manifest", type=Path)
    p.add_argument("--scheme", choices=classify.SCHEMES, default=None)
    p.add_argument("--no-calibration", action="store_true",
                   help="skip inner estimation of aggregation error rates")

    p = sub.add_parser("inspect", help="fit one region file and dump the curve")
    _add_common(p)
    p.add_argument("roi_file", type=Path)
    return parser


def _run_batch(args, config):
    manifest = ingest.load_manifest(args.manifest)
    outcomes, load_errors = pipeline.process_manifest(manifest, config)
    for bad in load_errors:
        print(f"error: {bad.patient_id}/{bad.roi_id}: {bad.error}",
              file=sys.stderr)
    return manifest, outcomes, load_errors


def cmd_synth(args, config):
    profiles = (synth.overlapping_profiles(args.noise) if args.overlap
                else synth.default_profiles(args.noise))
    cohort = synth.generate_cohort(args.patients, args.rois, profiles,
                                   config.seed, n_cancer=args.cancer)
    manifest_path = synth.write_cohort(cohort, args.out)
    n_rois = sum(len(p.rois) for p in cohort.patients)
    print(f"wrote {len(cohort.patients)} patients / {n_rois} regions to "
          f"{manifest_path}")
    return EXIT_OK


def cmd_fit(args, config):
    _, outcomes, load_errors = _run_batch(args, config)
    args.out.mkdir(parents=True, exist_ok=True)
    out_path = args.out / "fit_results.csv"
    lines = pipeline.fit_results_rows(outcomes + load_errors)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    n_failed = sum(1 for o in outcomes if o.error) + len(load_errors)
    print(f"wrote {out_path} ({len(outcomes)} fits, {n_failed} failures)")
    return EXIT_PARTIAL if n_failed else EXIT_OK


def cmd_features(args, config):
    _, outcomes, load_errors = _run_batch(args, config)
    args.out.mkdir(parents=True, exist_ok=True)
    sig_path = args.out / "signatures.csv"
    signature.save_signature_table(pipeline.signature_rows(outcomes), sig_path)
    fit_path = args.out / "fit_results.csv"
    fit_path.write_text("\n".join(pipeline.fit_results_rows(outcomes + load_errors))
                        + "\n", encoding="utf-8")
    n_acc = sum(1 for o in outcomes if o.signature is not None)
    print(f"wrote {sig_path} ({n_acc}/{len(outcomes)} regions accepted)")
    return EXIT_PARTIAL if load_errors else EXIT_OK


def cmd_train(args, config):
    manifest, outcomes, load_errors = _run_batch(args, config)
    scheme = args.scheme or config.scheme
    dataset = pipeline.assemble_dataset(manifest, outcomes)
    pairs = []
    for case in dataset.patients:
        for s in case.usable(scheme):
            pairs.append((s.features, s.annotation))
    model = classify.train(pairs, scheme, config.classifier, config.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    model_path = args.out / "model.json"
    model.save(model_path)
    print(f"trained {scheme} model on {len(pairs)} regions -> {model_path}")
    return EXIT_PARTIAL if load_errors else EXIT_OK


def cmd_evaluate(args, config):
    manifest, outcomes, load_errors = _run_batch(args, config)
    scheme = args.scheme or config.scheme
    dataset = pipeline.assemble_dataset(manifest, outcomes)
    agg = classify.CaseAggregationConfig(p_fp=config.aggregation.p_fp,
                                         p_fn=config.aggregation.p_fn)
    report = classify.loo_evaluate(
        dataset, scheme, config.seed, clf_params=config.classifier, agg=agg,
        calibrate=config.aggregation.calibrate and not args.no_calibration,
        threshold=config.aggregation.threshold)

    args.out.mkdir(parents=True, exist_ok=True)
    signature.save_signature_table(pipeline.signature_rows(outcomes),
                                   args.out / "signatures.csv")
    (args.out / "fit_results.csv").write_text(
        "\n".join(pipeline.fit_results_rows(outcomes + load_errors)) + "\n",
        encoding="utf-8")
    (args.out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    (args.out / "report.txt").write_text(report.text_table() + "\n",
                                         encoding="utf-8")
    classify.save_per_patient(report, args.out / "per_patient.csv")
    print(report.text_table())
    print(f"wrote report files to {args.out}")
    return EXIT_PARTIAL if load_errors else EXIT_OK


def cmd_inspect(args, config):
    series = ingest.load_series(args.roi_file, roi_id=args.roi_file.stem)
    outcome = pipeline.process_series(series, config)
    if outcome.fit is None:
        print(f"fit failed: {outcome.error}", file=sys.stderr)
        return EXIT_PARTIAL

    fit = outcome.fit
    floored = ingest.threshold_dispersion(series, config.fit.dispersion_floor)
    t = floored.times
    fitted = response(fit.params, t)
    weights = fitter.weight_curve(t, fit.weights_used, floored.duration_s)
    weights = weights / floored.dispersion ** 2

    lines = ["t,data,fitted,weight"]
    for k in range(len(t)):
        lines.append(f"{float(t[k])!r},{float(series.intensity[k])!r},"
                     f"{float(fitted[k])!r},{float(weights[k])!r}")
    table = "\n".join(lines) + "\n"
    if args.out != Path("."):
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "inspect.csv").write_text(table, encoding="utf-8")
        print(f"wrote {args.out / 'inspect.csv'}")
    else:
        print(table, end="")

    p = fit.params
    print(f"params: tau={p.tau:.6g} damping={p.damping:.6g} gain={p.gain:.6g} "
          f"tau_input={p.tau_input:.6g} delay={p.delay:.6g} offset={p.offset:.6g}")
    print(f"converged={fit.converged} objective={fit.objective_value:.6g} "
          f"l1_relative_error={fit.l1_relative_error:.6g}")

    if outcome.signature is not None:
        vec = outcome.signature.feature_vector()
        pairs = ", ".join(f"{n}={v:.6g}" for n, v in
                          zip(signature.FEATURE_NAMES, vec))
        print(f"signature: {pairs}")
        print("verdict: accepted")
        return EXIT_OK
    reasons = ",".join(outcome.verdict.reasons) if outcome.verdict else outcome.error
    print(f"verdict: no prediction ({reasons})")
    return EXIT_NO_PREDICTION


_COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_run_config(args)
    except PerfquantError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        return _COMMANDS[args.command](args, config)
    except PerfquantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
