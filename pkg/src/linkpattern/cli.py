"""Command-line surface: ingestion, training, sampling, prediction, evaluation.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 internal invariant violation.  Every run writes a JSON manifest next to
its primary output with the resolved configuration and artifact checksums,
sufficient to replay the run; all randomness flows from ``--seed`` through
named substreams.
"""

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .evaluate import (ExperimentResult, SplitSpec, TrainSettings,
                       evaluate_method, relation_ablation, split_fibers,
                       write_results_csv)
from .exceptions import (ConfigError, DataConflictError, DegenerateSplitError,
                         DimensionMismatchError, DivergenceError, FormatError,
                         NotPositiveDefiniteError, StallError,
                         UndefinedMetricError)
from .gibbs import ChainConfig, HyperPriors, SampleSet, predictive_mean, run_chain
from .io import (SynthSpec, generate_synthetic, load_factors, load_triples,
                 save_factors, save_triples)
from .model import ModelConfig, predict_fiber
from .optimize import MapConfig, fit_map


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(primary_out, subcommand, args, inputs, outputs) -> str:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "tool": "linkpattern",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "created_unix": time.time(),
    }
    path = str(primary_out) + ".manifest.json"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _parse_int_list(text: str):
    return [int(part) for part in text.split(",") if part]


def _parse_float_list(text: str):
    return [float(part) for part in text.split(",") if part]


def _add_hyper_flags(parser):
    group = parser.add_argument_group("hyperpriors")
    group.add_argument("--gamma-shape", type=float, default=5.0,
                       help="noise-precision Gamma shape (default 5)")
    group.add_argument("--gamma-scale", type=float, default=1.0,
                       help="noise-precision Gamma scale (default 1)")
    group.add_argument("--kappa0", type=float, default=2.0,
                       help="object-factor mean concentration (default 2)")
    group.add_argument("--kappa-t", type=float, default=1.0,
                       help="relation-factor mean concentration (default 1)")
    group.add_argument("--nu0", type=float, default=None,
                       help="Wishart degrees of freedom (default: rank)")
    group.add_argument("--w0-scale", type=float, default=1.0,
                       help="Wishart scale matrix is this multiple of I (default 1)")


def _priors_from_args(args, rank: int) -> HyperPriors:
    nu0 = args.nu0 if args.nu0 is not None else float(rank)
    return HyperPriors(mu0=np.zeros(rank), w0=args.w0_scale * np.eye(rank), nu0=nu0,
                       gamma_shape=args.gamma_shape, gamma_scale=args.gamma_scale,
                       kappa0=args.kappa0, kappa_t=args.kappa_t)


def _map_config_from_args(args) -> MapConfig:
    gamma_u = args.gamma_u if args.gamma_u is not None else args.gamma
    gamma_v = args.gamma_v if args.gamma_v is not None else args.gamma
    gamma_r = args.gamma_r if args.gamma_r is not None else args.gamma
    return MapConfig(gamma_u=gamma_u, gamma_v=gamma_v, gamma_r=gamma_r,
                     max_iterations=args.max_iterations,
                     rel_tolerance=args.rel_tolerance,
                     init_scale=args.init_scale, seed=args.seed)


def _write_trace_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def cmd_fit_map(args) -> int:
    tensor = load_triples(args.input)
    model_cfg = ModelConfig(rank=args.rank, use_logistic=not args.identity_link)
    factors, trace = fit_map(tensor, model_cfg, _map_config_from_args(args))
    save_factors(factors, args.out)
    trace_path = args.trace if args.trace else str(args.out) + ".trace.csv"
    rows = [["0", f"{trace.objectives[0]:.17g}", "", ""]]
    for k in range(trace.iterations):
        rows.append([str(k + 1), f"{trace.objectives[k + 1]:.17g}",
                     f"{trace.gradient_norms[k]:.17g}", f"{trace.step_sizes[k]:.17g}"])
    _write_trace_csv(trace_path, "iteration,objective,gradient_norm,step_size", rows)
    _write_manifest(args.out, "fit-map", args, [args.input], [args.out, trace_path])
    print(f"fit-map: {trace.termination} after {trace.iterations} iterations, "
          f"objective {trace.objectives[-1]:.6g} -> {args.out}")
    return 0


def cmd_sample(args) -> int:
    tensor = load_triples(args.input)
    init_factors = None
    if args.init == "random":
        if args.rank is None:
            raise ConfigError("--rank is required with --init random")
        rank = args.rank
    elif args.init.startswith("map:"):
        loaded = load_factors(args.init[4:])
        if isinstance(loaded, SampleSet):
            raise ConfigError("--init map: expects a single factor file, not a sample set")
        init_factors = loaded
        rank = loaded.rank
        if args.rank is not None and args.rank != rank:
            raise ConfigError(f"--rank {args.rank} conflicts with factor file rank {rank}")
    else:
        raise ConfigError(f"--init must be 'random' or 'map:<file>', got {args.init!r}")

    priors = _priors_from_args(args, rank)
    chain_cfg = ChainConfig(num_samples=args.samples, burn_in=args.burn_in,
                            thin=args.thin, seed=args.seed, init_factors=init_factors)
    samples = run_chain(tensor, ModelConfig(rank, use_logistic=False), priors, chain_cfg)
    save_factors(samples, args.out)
    trace_path = args.trace if args.trace else str(args.out) + ".trace.csv"
    rows = [[str(k), f"{ll:.17g}"] for k, ll in enumerate(samples.log_likelihoods)]
    _write_trace_csv(trace_path, "sweep,log_likelihood", rows)
    inputs = [args.input] + ([args.init[4:]] if args.init.startswith("map:") else [])
    _write_manifest(args.out, "sample", args, inputs, [args.out, trace_path])
    print(f"sample: retained {len(samples)} draws -> {args.out}")
    return 0


def _evaluate_cell(payload):
    (tensor, method, fraction, rank, seed, repeat_index, settings, macro) = payload
    split = SplitSpec(fraction, seed)
    try:
        train, test = split_fibers(tensor, split)
        return evaluate_method(method, train, test, rank=rank, seed=seed,
                               settings=settings, split=split,
                               repeat_index=repeat_index, macro_average=macro)
    except (UndefinedMetricError, DegenerateSplitError) as exc:
        print(f"warning: {method} fraction={fraction} rank={rank} seed={seed}: {exc}",
              file=sys.stderr)
        return ExperimentResult(method=method, split=split, rank=rank, seed=seed,
                                auc=None, wall_time_s=0.0, repeat_index=repeat_index)


def cmd_evaluate(args) -> int:
    tensor = load_triples(args.input)
    methods = [m for m in args.methods.split(",") if m]
    if not methods:
        raise ConfigError("--methods must name at least one method")
    fractions = _parse_float_list(args.fraction)
    if not fractions:
        raise ConfigError("--fraction must hold at least one value")
    ranks = _parse_int_list(args.sweep_ranks) if args.sweep_ranks else [args.rank]
    settings = TrainSettings(gamma=args.gamma,
                             map_max_iterations=args.max_iterations,
                             num_samples=args.samples, burn_in=args.burn_in,
                             thin=args.thin)
    dataset = args.dataset if args.dataset else os.path.splitext(os.path.basename(args.input))[0]

    if args.ablate_relations:
        results = []
        for repeat in range(args.repeats):
            run, _ranking = relation_ablation(
                tensor, split_spec=SplitSpec(fractions[0], args.seed + repeat),
                rank=ranks[0], method=methods[0], settings=settings)
            for res in run:
                res.repeat_index = repeat
            results.extend(run)
        write_results_csv(results, dataset, args.out, include_timing=args.timing)
        _write_manifest(args.out, "evaluate", args, [args.input], [args.out])
        print(f"evaluate: {len(results)} ablation results -> {args.out}")
        return 0

    cells = [(tensor, method, fraction, rank, args.seed + repeat, repeat,
              settings, args.macro_average)
             for fraction in fractions
             for rank in ranks
             for repeat in range(args.repeats)
             for method in methods]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_evaluate_cell, cells))
    else:
        results = [_evaluate_cell(cell) for cell in cells]
    write_results_csv(results, dataset, args.out, include_timing=args.timing)
    _write_manifest(args.out, "evaluate", args, [args.input], [args.out])
    print(f"evaluate: {len(results)} results -> {args.out}")
    return 0


def _load_pairs(path):
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            parts = body.split()
            if len(parts) != 2:
                raise FormatError(f"pair list line {number}: expected 'i j', got {body!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise FormatError(f"pair list line {number}: non-integer pair {body!r}") from None
    if not pairs:
        raise FormatError("pair list holds no pairs")
    return pairs


def cmd_predict(args) -> int:
    loaded = load_factors(args.factors)
    pairs = _load_pairs(args.pairs)
    if isinstance(loaded, SampleSet):
        config = ModelConfig(loaded.draws[0].rank, use_logistic=False)
        n_objects = loaded.draws[0].n_objects

        def score_fn(key):
            return predictive_mean(loaded, key, config)
    else:
        config = ModelConfig(loaded.rank, use_logistic=not args.identity_link)
        n_objects = loaded.n_objects

        def score_fn(key):
            return np.clip(predict_fiber(loaded, key, config), 0.0, 1.0)
    for i, j in pairs:
        if not (0 <= i < n_objects and 0 <= j < n_objects):
            raise FormatError(f"pair ({i}, {j}) out of range for N={n_objects}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for key in pairs:
            scores = " ".join(f"{s:.6f}" for s in score_fn(key))
            fh.write(f"{key[0]} {key[1]} {scores}\n")
    _write_manifest(args.out, "predict", args, [args.factors, args.pairs], [args.out])
    print(f"predict: {len(pairs)} pairs -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    priors = _priors_from_args(args, args.rank)
    spec = SynthSpec(n_objects=args.n_objects, n_relations=args.n_relations,
                     rank=args.rank, observed_fraction=args.observed_fraction,
                     binarize_threshold=args.threshold, seed=args.seed,
                     hyperpriors=priors)
    tensor, truth = generate_synthetic(spec)
    save_triples(tensor, args.out)
    truth_path = args.truth_out if args.truth_out else str(args.out) + ".truth.pltf"
    save_factors(truth, truth_path)
    _write_manifest(args.out, "synth", args, [], [args.out, truth_path])
    print(f"synth: {tensor} -> {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="linkpattern",
                     description="Link pattern prediction in multi-relational networks")
    parser.add_argument("--version", action="version", version=f"linkpattern {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    def add_common(p):
        p.add_argument("--config", default=None,
                       help="key=value file supplying defaults for any flag")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")

    p = sub.add_parser("fit-map", parents=[], help="MAP training by conjugate gradient",
                       description="Fit latent factors by MAP conjugate-gradient descent.")
    add_common(p)
    p.add_argument("--input", required=True, help="triple text file")
    p.add_argument("--out", required=True, help="output factor file")
    p.add_argument("--rank", type=int, required=True, help="factorization rank")
    p.add_argument("--gamma", type=float, default=0.01,
                   help="ridge weight for all factors (default 0.01)")
    p.add_argument("--gamma-u", type=float, default=None, help="override U ridge weight")
    p.add_argument("--gamma-v", type=float, default=None, help="override V ridge weight")
    p.add_argument("--gamma-r", type=float, default=None, help="override R ridge weight")
    p.add_argument("--max-iterations", type=int, default=500,
                   help="iteration cap (default 500)")
    p.add_argument("--rel-tolerance", type=float, default=1e-6,
                   help="relative decrease stopping tolerance (default 1e-6)")
    p.add_argument("--init-scale", type=float, default=0.1,
                   help="stddev of the random factor initialization (default 0.1)")
    p.add_argument("--identity-link", action=argparse.BooleanOptionalAction,
                   default=False,
                   help="fit without the logistic link (default: logistic on)")
    p.add_argument("--trace", default=None,
                   help="trace CSV path (default: <out>.trace.csv)")
    p.set_defaults(func=cmd_fit_map)

    p = sub.add_parser("sample", help="Gibbs sampling of the hierarchical model",
                       description="Draw posterior samples with the Gibbs sampler.")
    add_common(p)
    p.add_argument("--input", required=True, help="triple text file")
    p.add_argument("--out", required=True, help="output sample-set file")
    p.add_argument("--init", default="random",
                   help="'random' or 'map:<factor file>' (default random)")
    p.add_argument("--rank", type=int, default=None,
                   help="rank (required for random init; else from the factor file)")
    p.add_argument("--samples", type=int, default=300,
                   help="total Gibbs sweeps (default 300)")
    p.add_argument("--burn-in", type=int, default=50,
                   help="discarded initial sweeps (default 50)")
    p.add_argument("--thin", type=int, default=1, help="keep every k-th sweep (default 1)")
    p.add_argument("--trace", default=None,
                   help="log-likelihood trace CSV path (default: <out>.trace.csv)")
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="holdout evaluation of one or more methods",
                       description="Run the fiber-holdout evaluation protocol.")
    add_common(p)
    p.add_argument("--input", required=True, help="triple text file")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--methods", default="pltf,hb-r,hb-t,baseline",
                   help="comma list of pltf,hb-r,hb-t,baseline "
                        "(default all four)")
    p.add_argument("--fraction", default="0.2",
                   help="comma list of test fiber fractions (default 0.2)")
    p.add_argument("--rank", type=int, default=5, help="factorization rank (default 5)")
    p.add_argument("--sweep-ranks", default=None,
                   help="comma list of ranks; overrides --rank")
    p.add_argument("--repeats", type=int, default=5,
                   help="repeat count; repeat r uses seed+r (default 5)")
    p.add_argument("--gamma", type=float, default=0.01,
                   help="MAP ridge weight (default 0.01)")
    p.add_argument("--max-iterations", type=int, default=500,
                   help="MAP iteration cap (default 500)")
    p.add_argument("--samples", type=int, default=300,
                   help="Gibbs sweeps per chain (default 300)")
    p.add_argument("--burn-in", type=int, default=50,
                   help="Gibbs burn-in sweeps (default 50)")
    p.add_argument("--thin", type=int, default=1,
                   help="Gibbs thinning interval (default 1)")
    p.add_argument("--macro-average", action=argparse.BooleanOptionalAction,
                   default=False,
                   help="average per-relation AUCs instead of pooling all test entries")
    p.add_argument("--ablate-relations", action=argparse.BooleanOptionalAction,
                   default=False,
                   help="run the relation-restoration ablation instead of the method grid")
    p.add_argument("--dataset", default=None,
                   help="dataset label for the CSV (default: input file stem)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes for evaluation cells (default 1)")
    p.add_argument("--timing", action=argparse.BooleanOptionalAction, default=False,
                   help="write measured wall times to the CSV; breaks byte-level "
                        "reproducibility of reruns (default off: wall_time_s is 0)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score pairs with trained factors or samples",
                       description="Write length-T score vectors for a list of pairs.")
    add_common(p)
    p.add_argument("--factors", required=True,
                   help="factor or sample-set file from fit-map/sample")
    p.add_argument("--pairs", required=True, help="text file of 'i j' lines")
    p.add_argument("--out", required=True, help="output predictions file")
    p.add_argument("--identity-link", action=argparse.BooleanOptionalAction,
                   default=False,
                   help="score single factor files without the logistic link")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate synthetic data from the generative model",
                       description="Generate a synthetic tensor plus ground-truth factors.")
    add_common(p)
    p.add_argument("--n-objects", type=int, required=True, help="object count N")
    p.add_argument("--n-relations", type=int, required=True, help="relation count T")
    p.add_argument("--rank", type=int, required=True, help="true generating rank")
    p.add_argument("--observed-fraction", type=float, default=1.0,
                   help="fraction of entries kept observed (default 1.0)")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="binarization threshold on the raw reconstruction scale; "
                        "0 matches logistic probability 0.5 (default 0)")
    p.add_argument("--out", required=True, help="output triple file")
    p.add_argument("--truth-out", default=None,
                   help="ground-truth factor file (default: <out>.truth.pltf)")
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_synth)

    return parser


def _load_config_file(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            if "=" not in body:
                raise ConfigError(f"config line {number}: expected key=value, got {body!r}")
            key, value = body.split("=", 1)
            entries.append((key.strip(), value.strip()))
    return entries


_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _expand_config(argv):
    """Inline --config file entries as flags right after the subcommand.

    Explicit command-line flags come later in argv, so they override the
    file (argparse keeps the last occurrence).
    """
    path = None
    out = []
    skip = False
    for idx, token in enumerate(argv):
        if skip:
            skip = False
            continue
        if token == "--config":
            if idx + 1 >= len(argv):
                raise ConfigError("--config expects a path")
            path = argv[idx + 1]
            skip = True
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
        else:
            out.append(token)
    if path is None:
        return argv
    if not out:
        raise ConfigError("--config requires a subcommand")
    flags = []
    for key, value in _load_config_file(path):
        flag = "--" + key.replace("_", "-")
        lowered = value.lower()
        if lowered in _TRUE_WORDS:
            flags.append(flag)
        elif lowered in _FALSE_WORDS:
            flags.append("--no-" + flag[2:])
        else:
            flags.append(f"{flag}={value}")
    return [out[0]] + flags + out[1:]


_INPUT_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError, ConfigError,
                 FormatError, DataConflictError, DimensionMismatchError,
                 DegenerateSplitError, UndefinedMetricError, ValueError)
_NUMERICAL_ERRORS = (DivergenceError, StallError, NotPositiveDefiniteError)


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        argv = _expand_config(argv)
    except _INPUT_ERRORS as exc:
        print(f"linkpattern: error: {exc}", file=sys.stderr)
        return 1
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"linkpattern: numerical failure: {exc}", file=sys.stderr)
        return 2
    except _INPUT_ERRORS as exc:
        print(f"linkpattern: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # invariant violation; report and exit 3
        print(f"linkpattern: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
