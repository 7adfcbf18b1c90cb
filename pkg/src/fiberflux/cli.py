"""Command-line frontend for the fiberflux pipeline.

Subcommands: synth, profile, compare, atlas, groupstats, zscore. Every
command writes CSV/JSON data plus an SVG plot derived from it, echoes its
resolved configuration into each output's metadata, and is byte-identical
across reruns for a fixed seed. Exit codes: 0 success, 2 validation error,
3 numerical failure.

The output directory defaults to the FIBERFLUX_OUTPUT_DIR environment
variable, then the current directory; --out overrides both.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import DEFAULT_EPSILON, align_profiles
from .bundle import DEFAULT_DEGREE, DEFAULT_SAMPLES, mean_fiber, reorient_bundle
from .descriptors import ProfileConfig, tract_profile
from .errors import (
    DegenerateFiber,
    EmptyCrossSection,
    FiberFluxError,
    ParseError,
    RankDeficient,
    StalledDescent,
    UnknownChannel,
    ValidationError,
)
from .stats import (
    DEFAULT_FDR_Q,
    align_to_atlas,
    build_atlas,
    global_dissimilarity,
    pairwise_dissimilarity,
    pointwise_ttest,
    zscore_profile,
)
from . import plots, tractio
from .synthetic import generate_bundle

_VALIDATION_ERRORS = (
    ValidationError,
    ParseError,
    UnknownChannel,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    ValueError,
    KeyError,
)
_NUMERICAL_ERRORS = (
    EmptyCrossSection,
    RankDeficient,
    DegenerateFiber,
    StalledDescent,
    FloatingPointError,
)

COMPARE_CSV_COLUMNS = ("index", "tau", "s1_fraction", "s2_fraction",
                       "magnitude_a", "magnitude_b", "d")


def _radius_option(value: str):
    if value == "auto":
        return None
    if value == "inf":
        return math.inf
    return float(value)


def _add_profile_options(parser):
    parser.add_argument("--channel", required=True,
                        help="scalar channel name, or FFD for geometry only")
    parser.add_argument("--degree", type=int, default=DEFAULT_DEGREE,
                        help="cosine-series degree (default %(default)s)")
    parser.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                        help="profile sample count M (default %(default)s)")
    parser.add_argument("--radius", type=_radius_option, default="auto",
                        help="plane truncation radius in mm, 'auto' "
                             "(3x RMS crossing distance) or 'inf' "
                             "(default %(default)s)")
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="plane-normal convergence tolerance in radians "
                             "(default %(default)s)")
    parser.add_argument("--max-iter", type=int, default=50,
                        help="plane-normal iteration cap (default %(default)s)")
    parser.add_argument("--empty-policy", choices=("interpolate", "fail"),
                        default="interpolate",
                        help="handling of empty cross-sections "
                             "(default %(default)s)")


def _add_align_options(parser):
    parser.add_argument("--lam", type=float, default=None,
                        help="alignment regularization; default 0.1x the mean "
                             "off-diagonal dissimilarity")
    parser.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                        help="backtracking step in grid units "
                             "(default %(default)s)")


def _add_output_option(parser):
    parser.add_argument("--out", default=None,
                        help="output directory (default: FIBERFLUX_OUTPUT_DIR "
                             "or the current directory)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="data export format (default %(default)s)")


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("FIBERFLUX_OUTPUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_echo(args, command: str, inputs) -> dict:
    echo = {"command": command, "inputs": [str(p) for p in inputs],
            "version": __version__}
    for key in ("channel", "degree", "samples", "radius", "tol", "max_iter",
                "empty_policy", "lam", "epsilon", "fdr_q", "welch", "seed",
                "format"):
        if hasattr(args, key):
            value = getattr(args, key)
            if isinstance(value, float) and math.isinf(value):
                value = "inf"
            echo[key] = value
    return echo


def _profile_config(args) -> ProfileConfig:
    return ProfileConfig(radius=args.radius, tol=args.tol,
                         max_iter=args.max_iter, empty_policy=args.empty_policy)


def _load_profile(path, args, config):
    bundle = reorient_bundle(tractio.load_bundle(path))
    mean = mean_fiber(bundle, degree=args.degree, samples=args.samples)
    return bundle, mean, tract_profile(bundle, mean, args.channel, config)


def _cohort_paths(spec: str):
    path = Path(spec)
    if path.is_dir():
        files = sorted(path.glob("*.bundle"))
        if not files:
            raise ValidationError(f"no *.bundle files in directory {path}")
        return files
    return [path]


def _cohort_profiles(paths, args, config):
    cohort = []
    for p in paths:
        _, mean, profile = _load_profile(p, args, config)
        cohort.append((profile, mean))
    return cohort


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    spec = tractio.load_synthetic_spec(args.spec)
    if args.seed is not None:
        spec = type(spec)(**{**spec.__dict__, "seed": args.seed})
    out = _out_dir(args)
    bundle, truth = generate_bundle(spec)
    bundle_path = out / f"{spec.name}.bundle"
    oracle_path = out / f"{spec.name}_oracle.json"
    tractio.save_bundle(bundle, bundle_path)
    tractio.export_ground_truth(
        truth, oracle_path, metadata=_config_echo(args, "synth", [args.spec])
    )
    print(f"wrote {bundle_path} and {oracle_path}")
    return 0


def _cmd_profile(args) -> int:
    config = _profile_config(args)
    bundle, _, profile = _load_profile(args.bundle, args, config)
    out = _out_dir(args)
    echo = _config_echo(args, "profile", [args.bundle])
    stem = f"{bundle.name}_{args.channel}_profile"
    data_path = out / f"{stem}.{args.format}"
    tractio.export_profile(profile, data_path, fmt=args.format, metadata=echo)
    plot_path = out / f"{stem}.svg"
    plots.plot_profile(profile, plot_path)
    print(f"wrote {data_path} and {plot_path}")
    return 0


def _cmd_compare(args) -> int:
    config = _profile_config(args)
    bundle_a, mean_a, profile_a = _load_profile(args.bundle_a, args, config)
    bundle_b, mean_b, profile_b = _load_profile(args.bundle_b, args, config)
    path, aligned_a, aligned_b = align_profiles(
        profile_a, profile_b, lam=args.lam, epsilon=args.epsilon,
        samples=args.samples,
    )
    d = pairwise_dissimilarity(aligned_a, aligned_b)
    total = global_dissimilarity(aligned_a, aligned_b, path)
    out = _out_dir(args)
    echo = _config_echo(args, "compare", [args.bundle_a, args.bundle_b])
    stem = f"{bundle_a.name}_vs_{bundle_b.name}_{args.channel}"
    frac = path.fractions((len(profile_a), len(profile_b)))
    tau = np.linspace(0.0, 1.0, len(path))
    rows = [
        (str(m), repr(float(tau[m])), repr(float(frac[m, 0])),
         repr(float(frac[m, 1])), repr(float(aligned_a.magnitudes[m])),
         repr(float(aligned_b.magnitudes[m])), repr(float(d[m])))
        for m in range(len(path))
    ]
    csv_path = out / f"{stem}.csv"
    tractio._write_csv(csv_path, COMPARE_CSV_COLUMNS, rows, echo)
    summary_path = out / f"{stem}_summary.json"
    summary = {
        "version": tractio.FORMAT_VERSION,
        "kind": "comparison",
        "bundle_a": bundle_a.name,
        "bundle_b": bundle_b.name,
        "channel": args.channel,
        "global_dissimilarity": total,
        "mean_fiber_lengths_mm": [mean_a.arc_length, mean_b.arc_length],
        "config": echo,
    }
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    plot_path = out / f"{stem}.svg"
    plots.plot_compare(aligned_a, aligned_b, d, plot_path)
    print(f"wrote {csv_path}, {summary_path} and {plot_path}")
    print(f"global dissimilarity: {total}")
    return 0


def _cmd_atlas(args) -> int:
    config = _profile_config(args)
    paths = []
    for spec in args.cohort:
        paths.extend(_cohort_paths(spec))
    cohort = _cohort_profiles(paths, args, config)
    atlas = build_atlas(cohort, lam=args.lam, epsilon=args.epsilon)
    out = _out_dir(args)
    echo = _config_echo(args, "atlas", paths)
    atlas_path = out / f"atlas_{args.channel}.json"
    tractio.export_atlas(atlas, atlas_path, fmt="json", metadata=echo)
    plot_path = out / f"atlas_{args.channel}.svg"
    plots.plot_atlas(atlas, plot_path)
    print(f"wrote {atlas_path} and {plot_path}")
    return 0


def _cmd_groupstats(args) -> int:
    config = _profile_config(args)
    paths_a = _cohort_paths(args.cohort_a)
    paths_b = _cohort_paths(args.cohort_b)
    cohort_a = _cohort_profiles(paths_a, args, config)
    cohort_b = _cohort_profiles(paths_b, args, config)
    # pooled reference keeps the test symmetric in the two groups
    atlas = build_atlas(cohort_a + cohort_b, lam=args.lam, epsilon=args.epsilon)
    aligned_a = [align_to_atlas(p, atlas, lam=args.lam, epsilon=args.epsilon)
                 for p, _ in cohort_a]
    aligned_b = [align_to_atlas(p, atlas, lam=args.lam, epsilon=args.epsilon)
                 for p, _ in cohort_b]
    stats = pointwise_ttest(aligned_a, aligned_b, equal_var=not args.welch,
                            fdr_q=args.fdr_q)
    out = _out_dir(args)
    echo = _config_echo(args, "groupstats", paths_a + paths_b)
    stem = f"groupstats_{args.channel}"
    data_path = out / f"{stem}.{args.format}"
    tractio.export_stats(stats, data_path, fmt=args.format, metadata=echo)
    plot_path = out / f"{stem}.svg"
    plots.plot_stats(stats, plot_path, q_level=args.fdr_q)
    n_sig = int(stats.significant.sum())
    print(f"wrote {data_path} and {plot_path}")
    print(f"{n_sig} of {len(stats.p_values)} points significant at q<={args.fdr_q}")
    return 0


def _cmd_zscore(args) -> int:
    config = _profile_config(args)
    atlas = tractio.import_atlas(args.atlas)
    if atlas.channel != args.channel:
        raise ValidationError(
            f"atlas holds channel {atlas.channel!r}, requested {args.channel!r}"
        )
    bundle, _, profile = _load_profile(args.bundle, args, config)
    aligned = align_to_atlas(profile, atlas, lam=args.lam, epsilon=args.epsilon)
    amap = zscore_profile(aligned, atlas)
    out = _out_dir(args)
    echo = _config_echo(args, "zscore", [args.bundle, args.atlas])
    stem = f"{bundle.name}_{args.channel}_zscore"
    data_path = out / f"{stem}.{args.format}"
    tractio.export_anomaly(amap, data_path, fmt=args.format, metadata=echo)
    plot_path = out / f"{stem}.svg"
    plots.plot_anomaly(amap, plot_path)
    print(f"wrote {data_path} and {plot_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiberflux",
        description="Fiber-flux tractometry: along-tract descriptors, "
                    "profile alignment, and group statistics.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bundle + oracle")
    p.add_argument("spec", help="SyntheticSpec JSON file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the spec's seed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("profile", help="descriptor profile of one bundle")
    p.add_argument("bundle", help="bundle file")
    _add_profile_options(p)
    _add_output_option(p)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("compare", help="align two bundles and compare profiles")
    p.add_argument("bundle_a")
    p.add_argument("bundle_b")
    _add_profile_options(p)
    _add_align_options(p)
    _add_output_option(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("atlas", help="standardized cohort atlas")
    p.add_argument("cohort", nargs="+",
                   help="bundle files and/or directories of *.bundle files")
    _add_profile_options(p)
    _add_align_options(p)
    _add_output_option(p)
    p.set_defaults(func=_cmd_atlas)

    p = sub.add_parser("groupstats", help="pointwise two-group comparison")
    p.add_argument("cohort_a", help="directory (or file) of group A bundles")
    p.add_argument("cohort_b", help="directory (or file) of group B bundles")
    _add_profile_options(p)
    _add_align_options(p)
    p.add_argument("--fdr-q", type=float, default=DEFAULT_FDR_Q,
                   help="FDR significance level (default %(default)s)")
    p.add_argument("--welch", action="store_true",
                   help="use Welch's test instead of pooled variance")
    _add_output_option(p)
    p.set_defaults(func=_cmd_groupstats)

    p = sub.add_parser("zscore", help="subject deviation from an atlas")
    p.add_argument("bundle", help="subject bundle file")
    p.add_argument("atlas", help="atlas JSON file")
    _add_profile_options(p)
    _add_align_options(p)
    _add_output_option(p)
    p.set_defaults(func=_cmd_zscore)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"fiberflux: numerical failure: {exc}", file=sys.stderr)
        return 3
    except _VALIDATION_ERRORS as exc:
        print(f"fiberflux: {exc}", file=sys.stderr)
        return 2
    except FiberFluxError as exc:
        print(f"fiberflux: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
