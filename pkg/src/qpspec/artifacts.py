"""Reading and writing the solver's on-disk artifacts.

Numbers in CSV files are written with 15 significant digits so reruns with
the same seed reproduce the files textually.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .eigensolver import EigenPairSet
from .lattice import FrequencyIndexSet

EIGENVALUES_CSV = "eigenvalues.csv"
INDEXSET_CSV = "indexset.csv"
RUN_JSON = "run.json"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return "%.15g" % float(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write atomically: the file appears only once it is complete."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    os.replace(tmp, path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} has no header row")
    return rows[0], rows[1:]


def coefficient_file(i: int) -> str:
    """File name of the ``i``-th (1-based) eigenvector."""
    return f"coefficients_{i}.bin"


def write_coefficients(path, index_set: FrequencyIndexSet, u) -> None:
    u = np.ascontiguousarray(u, dtype="<c16")
    if u.shape != (index_set.size,):
        raise ValueError("coefficients are not aligned to the index set")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{index_set.n} {index_set.N} {u.size}\n".encode("ascii"))
        fh.write(u.tobytes())
    os.replace(tmp, path)


def read_coefficients(path) -> tuple[int, int, np.ndarray]:
    """Returns ``(n, N, values)``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ValueError(f"{path}: malformed header")
        n, N, count = (int(t) for t in header)
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != count:
        raise ValueError(f"{path}: header announces {count} values, found {data.size}")
    return n, N, data.astype(complex)


def write_index_set(path, index_set: FrequencyIndexSet) -> None:
    header = [f"k{j + 1}" for j in range(index_set.n)]
    write_csv(path, header, index_set.indices.tolist())


def read_index_set(path) -> np.ndarray:
    header, rows = read_csv(path)
    return np.array(rows, dtype=np.int64).reshape(len(rows), len(header))


def write_eigenvalues(path, pairs: EigenPairSet) -> None:
    write_csv(
        path,
        ["index", "eigenvalue", "residual", "converged"],
        ((i + 1, p.E, p.residual, p.converged) for i, p in enumerate(pairs)),
    )


def read_eigenvalues(path) -> np.ndarray:
    header, rows = read_csv(path)
    if "eigenvalue" not in header:
        raise ValueError(f"{path}: no eigenvalue column")
    col = header.index("eigenvalue")
    return np.array([float(r[col]) for r in rows], dtype=float)


def write_json(path, payload) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def write_solution(out_dir, index_set: FrequencyIndexSet, pairs: EigenPairSet) -> None:
    out_dir = Path(out_dir)
    write_eigenvalues(out_dir / EIGENVALUES_CSV, pairs)
    write_index_set(out_dir / INDEXSET_CSV, index_set)
    for i, p in enumerate(pairs, 1):
        write_coefficients(out_dir / coefficient_file(i), index_set, p.coefficients)
