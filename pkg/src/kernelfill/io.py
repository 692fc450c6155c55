"""Readers and writers for the on-disk formats used by the command line.

Matrices are headerless CSV files holding the full square matrix, with the
literal token ``NA`` in rows and columns of missing samples. A sidecar JSON
file next to the CSV (same stem, ``.json`` suffix) lists the sample ids in
order and the ids of the missing samples::

    {"ids": ["s000", "s001", ...], "missing": ["s004"]}

Numbers are written with 12 significant digits.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .bioeval import NUCLEOTIDE, Sequence
from .errors import InvalidInput

NA = "NA"
FLOAT_FORMAT = "{:.12g}"


def format_float(x: float) -> str:
    return FLOAT_FORMAT.format(float(x))


def round_sig(x: float) -> float:
    """Round to the 12 significant digits used by every writer here."""
    return float(format_float(x))


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_matrix_csv(path, K, missing_rows=()) -> None:
    K = np.asarray(K, dtype=float)
    missing = set(int(i) for i in missing_rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for i, row in enumerate(K):
            writer.writerow(
                NA if (i in missing or j in missing) else format_float(v) for j, v in enumerate(row)
            )


def read_matrix_csv(path):
    """Read a square CSV matrix; returns ``(matrix, missing_rows)``.

    ``NA`` entries become ``nan``. A row counts as missing when all of its
    entries are ``NA``; any other ``NA`` is a validation error.
    """
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([math.nan if c.strip() == NA else float(c) for c in row])
            except ValueError as exc:
                raise InvalidInput(f"{path}:{line_no}: {exc}") from exc
    d = len(rows)
    if d == 0 or any(len(r) != d for r in rows):
        raise InvalidInput(f"{path}: matrix is not square")
    K = np.array(rows)
    if np.any(np.isinf(K)):
        raise InvalidInput(f"{path}: infinite entries")
    nan = np.isnan(K)
    missing = [i for i in range(d) if nan[i].all()]
    expected = np.zeros((d, d), dtype=bool)
    expected[missing, :] = True
    expected[:, missing] = True
    if not np.array_equal(nan, expected):
        raise InvalidInput(f"{path}: NA entries must fill whole rows and columns")
    return K, missing


def read_sidecar(csv_path, d: int):
    """Sample ids and missing positions for the matrix at ``csv_path``.

    Without a sidecar the ids default to ``s0, s1, ...`` and nothing beyond
    all-``NA`` rows is missing.
    """
    path = sidecar_path(csv_path)
    if not path.exists():
        return [f"s{i}" for i in range(d)], []
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: {exc}") from exc
    ids = [str(i) for i in meta.get("ids", [])]
    if len(ids) != d or len(set(ids)) != d:
        raise InvalidInput(f"{path}: expected {d} distinct ids")
    pos = {s: i for i, s in enumerate(ids)}
    try:
        missing = sorted(pos[str(s)] for s in meta.get("missing", []))
    except KeyError as exc:
        raise InvalidInput(f"{path}: unknown missing id {exc}") from exc
    return ids, missing


def write_sidecar(csv_path, ids, missing_ids=()) -> None:
    payload = {"ids": list(ids), "missing": list(missing_ids)}
    sidecar_path(csv_path).write_text(json.dumps(payload, indent=2) + "\n")


def read_fasta(path, alphabet: str = NUCLEOTIDE, labels: Optional[dict] = None) -> list:
    records = []
    ident, chunks = None, []

    def flush():
        if ident is not None:
            label = None if labels is None else labels.get(ident)
            records.append(Sequence(ident, "".join(chunks), label, alphabet))

    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";"):
                continue
            if line.startswith(">"):
                flush()
                ident, chunks = line[1:].split()[0] if line[1:].strip() else "", []
                if not ident:
                    raise InvalidInput(f"{path}:{line_no}: empty record id")
            elif ident is None:
                raise InvalidInput(f"{path}:{line_no}: sequence data before the first header")
            else:
                chunks.append(line)
    flush()
    if not records:
        raise InvalidInput(f"{path}: no FASTA records")
    if len({r.id for r in records}) != len(records):
        raise InvalidInput(f"{path}: duplicate record ids")
    return records


def write_fasta(path, seqs, width: int = 70) -> None:
    with open(path, "w") as fh:
        for s in seqs:
            fh.write(f">{s.id}\n")
            for i in range(0, len(s.symbols), width):
                fh.write(s.symbols[i : i + width] + "\n")


def read_labels(path) -> dict:
    labels = {}
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise InvalidInput(f"{path}:{line_no}: expected two columns")
            try:
                labels[row[0]] = int(row[1])
            except ValueError as exc:
                raise InvalidInput(f"{path}:{line_no}: {exc}") from exc
    return labels


def write_labels(path, seqs) -> None:
    with open(path, "w") as fh:
        for s in seqs:
            fh.write(f"{s.id}\t{s.label}\n")


def dump_json(obj, path=None) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
