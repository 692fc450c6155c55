"""Command-line front end: ``kernelfill {complete,sweep,check-autoparallel,gen-data}``.

Exit codes: 0 success, 1 I/O error, 2 invalid input, 3 numerical failure,
4 negative autoparallel check. ``KERNELFILL_LOG`` (error, warn, info, debug)
sets the stderr log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as kio
from .bioeval import gram_matrix, synth_dataset
from .completion import EmConfig, GammaPrior, IncompleteKernel, run_em
from .errors import InvalidInput, NumericalError
from .experiment import ExperimentConfig, FileSource, all_failed_ratios, curve_rows, run_sweep
from .models import check_doubly_autoparallel

logger = logging.getLogger("kernelfill")

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECK_NEGATIVE = 0, 1, 2, 3, 4
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("KERNELFILL_LOG", "warn").lower(), logging.WARNING)
    root = logging.getLogger("kernelfill")
    root.setLevel(level)
    if not any(getattr(h, "_kernelfill", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("kernelfill: %(levelname)s: %(message)s"))
        handler._kernelfill = True
        root.addHandler(handler)


def _parse_ids(text):
    if not text:
        return []
    return [s.strip() for s in text.split(",") if s.strip()]


def _load_matrix_with_ids(path):
    K, na_rows = kio.read_matrix_csv(path)
    ids, sidecar_missing = kio.read_sidecar(path, K.shape[0])
    return K, ids, sorted(set(na_rows) | set(sidecar_missing))


def _load_base(path, ids, alphabet, ridge):
    path = Path(path)
    if path.suffix.lower() in {".fa", ".fasta", ".fna", ".faa"}:
        seqs = {s.id: s for s in kio.read_fasta(path, alphabet)}
        missing = [i for i in ids if i not in seqs]
        if missing:
            raise InvalidInput(f"base FASTA lacks samples {missing[:5]}")
        K = gram_matrix([seqs[i] for i in ids])
        return K + ridge * np.eye(len(ids))
    K, base_ids, na = _load_matrix_with_ids(path)
    if na:
        raise InvalidInput("base matrix must be complete")
    if kio.sidecar_path(path).exists():
        pos = {s: i for i, s in enumerate(base_ids)}
        if set(pos) != set(ids):
            raise InvalidInput("base matrix ids do not match the kernel ids")
        order = [pos[i] for i in ids]
        K = K[np.ix_(order, order)]
    elif K.shape[0] != len(ids):
        raise InvalidInput(f"base matrix has {K.shape[0]} samples, expected {len(ids)}")
    return K + ridge * np.eye(len(ids))


def cmd_complete(args) -> int:
    if (args.kernel is None) == (args.sequences is None):
        raise InvalidInput("give exactly one of --kernel or --sequences")
    if (args.map_nu is None) != (args.map_alpha is None):
        raise InvalidInput("--map-nu and --map-alpha go together")
    if args.kernel is not None:
        K, ids, missing_pos = _load_matrix_with_ids(args.kernel)
        extra = _parse_ids(args.missing)
        if extra:
            pos = {s: i for i, s in enumerate(ids)}
            unknown = [s for s in extra if s not in pos]
            if unknown:
                raise InvalidInput(f"unknown missing ids {unknown}")
            missing_pos = sorted(set(missing_pos) | {pos[s] for s in extra})
    else:
        seqs = kio.read_fasta(args.sequences, args.alphabet)
        ids = [s.id for s in seqs]
        pos = {s: i for i, s in enumerate(ids)}
        wanted = _parse_ids(args.missing)
        unknown = [s for s in wanted if s not in pos]
        if unknown:
            raise InvalidInput(f"unknown missing ids {unknown}")
        missing_pos = sorted(pos[s] for s in wanted)
        observed_seqs = [s for s in seqs if s.id not in set(wanted)]
        K = np.full((len(ids), len(ids)), np.nan)
        obs = [pos[s.id] for s in observed_seqs]
        K[np.ix_(obs, obs)] = gram_matrix(observed_seqs) + args.ridge * np.eye(len(obs))

    ell = len(ids)
    obs = [i for i in range(ell) if i not in set(missing_pos)]
    if not obs:
        raise InvalidInput("every sample is missing")
    K_B = _load_base(args.base, ids, args.alphabet, args.ridge)
    incomplete = IncompleteKernel(ell, K[np.ix_(obs, obs)], tuple(missing_pos))
    prior = None if args.map_nu is None else GammaPrior(args.map_nu, args.map_alpha)
    config = EmConfig(args.max_iters, args.rel_tol, prior)

    completed, model, trace = run_em(incomplete, K_B, config)
    estimated = model.materialize()

    if args.out_completed:
        kio.write_matrix_csv(args.out_completed, completed.matrix)
        kio.write_sidecar(args.out_completed, ids)
    if args.out_estimated:
        kio.write_matrix_csv(args.out_estimated, estimated)
        kio.write_sidecar(args.out_estimated, ids)
    if args.report:
        report = {
            "schema": 1,
            "tool": "kernelfill",
            "version": __version__,
            "ids": ids,
            "missing": [ids[i] for i in missing_pos],
            "config": {
                "rel_tol": args.rel_tol,
                "max_iters": args.max_iters,
                "map_nu": args.map_nu,
                "map_alpha": args.map_alpha,
            },
            "base_regularization": kio.round_sig(model.regularization),
            "kl_trace": [kio.round_sig(v) for v in trace.kl_values],
            "iterations": len(trace),
            "converged": trace.converged,
            "clamped": trace.clamped,
            "final_kl": kio.round_sig(trace.final_kl),
        }
        kio.dump_json(report, args.report)
    logger.info("completed %d missing samples in %d iterations", len(missing_pos), len(trace))
    return EXIT_OK


def _sweep_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{args.config}: {exc}") from exc
    overrides = {
        "missing_ratios": [float(r) for r in args.ratios.split(",")] if args.ratios else None,
        "trials": args.trials,
        "k": args.k,
        "seed": args.seed,
        "rel_tol": args.rel_tol,
        "max_iters": args.max_iters,
        "prior_nu": args.map_nu,
        "prior_alpha": args.map_alpha,
        "restarts": args.restarts,
        "kernel_ridge": args.ridge,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    config = ExperimentConfig.from_dict(data)
    if args.fasta_expensive or args.fasta_base or args.labels:
        if not (args.fasta_expensive and args.fasta_base and args.labels):
            raise InvalidInput("--fasta-expensive, --fasta-base and --labels go together")
        config.source = FileSource(args.fasta_expensive, args.fasta_base, args.labels, args.alphabet, args.alphabet)
    return config


def cmd_sweep(args) -> int:
    config = _sweep_config(args)
    report = run_sweep(config)
    text = kio.dump_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.curve_csv:
        with open(args.curve_csv, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(curve_rows(report))
    failed = all_failed_ratios(report)
    if failed:
        logger.error("every trial failed at ratios %s", failed)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_check_autoparallel(args) -> int:
    bases = []
    for path in args.bases:
        K, na = kio.read_matrix_csv(path)
        if na:
            raise InvalidInput(f"{path}: base matrices cannot have missing rows")
        if not np.allclose(K, K.T, atol=1e-12):
            raise InvalidInput(f"{path}: matrix is not symmetric")
        bases.append(K)
    report = check_doubly_autoparallel(bases)
    sys.stdout.write(kio.dump_json(report.to_dict()))
    return EXIT_OK if report.is_doubly_autoparallel else EXIT_CHECK_NEGATIVE


def cmd_gen_data(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    ds = synth_dataset(sizes, args.alphabet, args.length, args.rate_a, args.rate_b, args.seed)
    prefix = args.out_prefix
    kio.write_fasta(f"{prefix}_expensive.fasta", ds.marker_a)
    kio.write_fasta(f"{prefix}_base.fasta", ds.marker_b)
    kio.write_labels(f"{prefix}_labels.tsv", ds.marker_a)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelfill", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kernelfill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def em_flags(p, defaults=True):
        p.add_argument("--rel-tol", type=float, default=1e-9 if defaults else None)
        p.add_argument("--max-iters", type=int, default=500 if defaults else None)
        p.add_argument("--map-nu", type=float, help="Gamma prior shape (enables the MAP m-step)")
        p.add_argument("--map-alpha", type=float, help="Gamma prior scale")

    p = sub.add_parser("complete", help="complete an incomplete kernel matrix")
    p.add_argument("--kernel", help="CSV with NA rows/columns for missing samples")
    p.add_argument("--sequences", help="FASTA of the expensive marker")
    p.add_argument("--missing", help="comma-separated ids of missing samples")
    p.add_argument("--base", required=True, help="complete base kernel (CSV) or base FASTA")
    p.add_argument("--alphabet", default="nucleotide", help="nucleotide, amino, or explicit symbols")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge added to kernels built here")
    em_flags(p)
    p.add_argument("--out-completed")
    p.add_argument("--out-estimated")
    p.add_argument("--report")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("sweep", help="missing-ratio clustering experiment")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--ratios", help="comma-separated missing ratios")
    p.add_argument("--trials", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--ridge", type=float)
    em_flags(p, defaults=False)
    p.add_argument("--fasta-expensive")
    p.add_argument("--fasta-base")
    p.add_argument("--labels")
    p.add_argument("--alphabet", default="nucleotide")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--curve-csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-autoparallel", help="test bases for the doubly autoparallel property")
    p.add_argument("--bases", nargs="+", required=True)
    p.set_defaults(func=cmd_check_autoparallel)

    p = sub.add_parser("gen-data", help="write a synthetic two-marker dataset")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--sizes", default="10,31,11")
    p.add_argument("--alphabet", default="nucleotide")
    p.add_argument("--length", type=int, default=200)
    p.add_argument("--rate-a", type=float, default=0.05)
    p.add_argument("--rate-b", type=float, default=0.30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInput, ValueError) as exc:
        print(f"kernelfill: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"kernelfill: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"kernelfill: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
