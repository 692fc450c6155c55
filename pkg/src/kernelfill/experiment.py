"""Missing-ratio sweep: how well do completed kernels cluster?

For each missing ratio and trial, a random subset of samples loses its
expensive-marker data. The incomplete expensive kernel is completed with
spectral variants of the cheap-marker kernel, and four matrices are
clustered with identical k-means settings: the completed matrix, the
estimated (model) matrix, the cheap base matrix, and the full expensive
matrix. Agreement with the true classes is measured by ARI.

Randomness: each ``(ratio, trial)`` cell draws from numpy's PCG64 generator
seeded with ``SeedSequence([seed, ratio_index, trial])``; the missing set is
drawn uniformly without replacement and the k-means seed is the first
32-bit word of the same sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .bioeval import (
    DEFAULT_CLASS_SIZES,
    adjusted_rand_index,
    gram_matrix,
    kernel_kmeans,
    synth_dataset,
)
from .completion import EmConfig, GammaPrior, IncompleteKernel, init_model, run_em
from .errors import InvalidInput, KernelFillError
from .io import round_sig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SERIES = ("completed", "estimated", "base", "full")
DEFAULT_RATIOS = tuple(round(0.1 * i, 1) for i in range(10))


@dataclass
class SyntheticSource:
    class_sizes: tuple = DEFAULT_CLASS_SIZES
    alphabet: str = "nucleotide"
    length: int = 200
    rate_a: float = 0.05
    rate_b: float = 0.30
    seed: int = 0


@dataclass
class FileSource:
    """Sequences on disk: expensive marker, cheap base marker, and class labels."""

    fasta_expensive: str
    fasta_base: str
    labels: str
    alphabet_expensive: str = "nucleotide"
    alphabet_base: str = "nucleotide"


@dataclass
class ExperimentConfig:
    missing_ratios: tuple = DEFAULT_RATIOS
    trials: int = 20
    k: int = 3
    seed: int = 0
    rel_tol: float = 1e-9
    max_iters: int = 500
    prior_nu: Optional[float] = None
    prior_alpha: Optional[float] = None
    restarts: int = 10
    #: Added to both normalized Gram matrices; bimer count kernels over
    #: more samples than bimer types are singular without it.
    kernel_ridge: float = 1e-3
    source: SyntheticSource | FileSource = field(default_factory=SyntheticSource)

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.missing_ratios)
        if not ratios:
            raise InvalidInput("need at least one missing ratio")
        if any(not 0.0 <= r <= 0.95 for r in ratios):
            raise InvalidInput("missing ratios must lie in [0, 0.95]")
        if list(ratios) != sorted(ratios):
            raise InvalidInput("missing ratios must be sorted ascending")
        self.missing_ratios = ratios
        if self.trials < 1:
            raise InvalidInput("trials must be at least 1")
        if self.k < 1:
            raise InvalidInput("k must be at least 1")
        if (self.prior_nu is None) != (self.prior_alpha is None):
            raise InvalidInput("give both prior_nu and prior_alpha, or neither")
        if self.kernel_ridge < 0:
            raise InvalidInput("kernel_ridge must be non-negative")

    @property
    def prior(self) -> Optional[GammaPrior]:
        if self.prior_nu is None:
            return None
        return GammaPrior(self.prior_nu, self.prior_alpha)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        src = data.pop("source", None)
        if isinstance(src, dict):
            kind = src.get("kind", "synthetic")
            fields = {k: v for k, v in src.items() if k != "kind"}
            if kind == "synthetic":
                if "class_sizes" in fields:
                    fields["class_sizes"] = tuple(fields["class_sizes"])
                data["source"] = SyntheticSource(**fields)
            elif kind == "files":
                data["source"] = FileSource(**fields)
            else:
                raise InvalidInput(f"unknown source kind {kind!r}")
        if "missing_ratios" in data:
            data["missing_ratios"] = tuple(data["missing_ratios"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidInput(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["missing_ratios"] = list(self.missing_ratios)
        src = out["source"]
        src["kind"] = "synthetic" if isinstance(self.source, SyntheticSource) else "files"
        if "class_sizes" in src:
            src["class_sizes"] = list(src["class_sizes"])
        return out


def load_kernels(config: ExperimentConfig):
    """Build ``(ids, labels, K_expensive, K_base)`` for a sweep."""
    src = config.source
    if isinstance(src, SyntheticSource):
        ds = synth_dataset(src.class_sizes, src.alphabet, src.length, src.rate_a, src.rate_b, src.seed)
        expensive, base = ds.marker_a, ds.marker_b
    else:
        from .io import read_fasta, read_labels

        labels = read_labels(src.labels)
        expensive = read_fasta(src.fasta_expensive, src.alphabet_expensive, labels)
        base = read_fasta(src.fasta_base, src.alphabet_base, labels)
        by_id = {s.id: s for s in base}
        if set(by_id) != {s.id for s in expensive}:
            raise InvalidInput("expensive and base FASTA files list different samples")
        base = [by_id[s.id] for s in expensive]
        if any(s.label is None for s in expensive):
            raise InvalidInput("every sample needs a class label")
    ids = [s.id for s in expensive]
    y = np.array([s.label for s in expensive], dtype=int)
    ridge = config.kernel_ridge * np.eye(len(ids))
    return ids, y, gram_matrix(expensive) + ridge, gram_matrix(base) + ridge


def _trial_rng(seed: int, ratio_index: int, trial: int):
    ss = np.random.SeedSequence([seed, ratio_index, trial])
    kmeans_seed = int(ss.generate_state(1)[0])
    return np.random.Generator(np.random.PCG64(ss)), kmeans_seed


def _summary(values):
    if not values:
        return {"mean": None, "std": None}
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {"mean": round_sig(float(np.mean(arr))), "std": round_sig(std)}


def run_sweep(config: ExperimentConfig, progress=None) -> dict:
    """Run the full sweep and return the report as a JSON-ready dict.

    Trials that raise a kernelfill error are recorded with their message and
    left out of the aggregates; ``curve[i]["failures"]`` counts them.
    """
    ids, y, K_exp, K_base = load_kernels(config)
    ell = len(ids)
    em_config = EmConfig(config.max_iters, config.rel_tol, config.prior)
    base_model = init_model(K_base)

    trials_out = []
    curve = []
    for ri, ratio in enumerate(config.missing_ratios):
        n_missing = math.ceil(ratio * ell - 1e-9)
        if n_missing >= ell:
            raise InvalidInput(f"ratio {ratio} leaves no observed samples")
        aris = {s: [] for s in SERIES}
        failures = 0
        for t in range(config.trials):
            rng, kseed = _trial_rng(config.seed, ri, t)
            missing = np.sort(rng.choice(ell, size=n_missing, replace=False)) if n_missing else np.array([], int)
            record = {
                "ratio": ratio,
                "trial": t,
                "kmeans_seed": kseed,
                "missing": [ids[i] for i in missing],
            }
            try:
                incomplete = IncompleteKernel.from_full(K_exp, missing)
                completed, model, trace = run_em(incomplete, base_model, em_config)
                matrices = {
                    "completed": completed.matrix,
                    "estimated": model.materialize(),
                    "base": K_base,
                    "full": K_exp,
                }
                ari = {}
                for name in SERIES:
                    part = kernel_kmeans(matrices[name], config.k, kseed, config.restarts)
                    ari[name] = adjusted_rand_index(part, y)
                for name in SERIES:
                    aris[name].append(ari[name])
                record.update(
                    ari={k: round_sig(v) for k, v in ari.items()},
                    kl_trace=[round_sig(v) for v in trace.kl_values],
                    converged=trace.converged,
                    clamped=trace.clamped,
                    error=None,
                )
            except KernelFillError as exc:
                failures += 1
                logger.warning("ratio %.2f trial %d failed: %s", ratio, t, exc)
                record.update(ari=None, kl_trace=None, converged=False, clamped=False, error=f"{type(exc).__name__}: {exc}")
            trials_out.append(record)
            if progress is not None:
                progress(ratio, t)
        curve.append(
            {
                "ratio": ratio,
                "n_missing": n_missing,
                "trials": config.trials,
                "failures": failures,
                **{name: _summary(aris[name]) for name in SERIES},
            }
        )
    return {
        "schema": SCHEMA_VERSION,
        "tool": "kernelfill",
        "version": __version__,
        "prng": "numpy PCG64 seeded by SeedSequence([seed, ratio_index, trial])",
        "n_samples": ell,
        "config": config.to_dict(),
        "curve": curve,
        "trials": trials_out,
    }


def curve_rows(report: dict) -> list:
    """Flatten the curve into CSV rows: ratio then mean/std per series."""
    header = ["ratio"] + [f"{s}_{stat}" for s in SERIES for stat in ("mean", "std")]
    rows = [header]
    for point in report["curve"]:
        row = [point["ratio"]]
        for s in SERIES:
            row += [point[s]["mean"], point[s]["std"]]
        rows.append(row)
    return rows


def all_failed_ratios(report: dict) -> list:
    return [p["ratio"] for p in report["curve"] if p["failures"] == p["trials"]]
