"""Projection matrices, Fourier index sets and the kinetic diagonal.

A d-dimensional quasiperiodic function is handled through its n-dimensional
2*pi-periodic parent.  Parent Fourier modes are integer vectors ``k``; the
physical wavevector of a mode is ``q = P @ k``.

Index sets always live on an ``N**n`` tensor DFT grid with ``N`` modes per
axis.  Components follow the per-axis DFT layout
``0, 1, ..., ceil(N/2)-1, -floor(N/2), ..., -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

#: Largest tensor grid (number of points) any builder will allocate.
DEFAULT_MAX_GRID_POINTS = 2**25

Norm = Literal["2", "inf"]


class ResourceBudgetError(MemoryError):
    """Raised when a requested grid exceeds the configured memory budget."""


def check_budget(n: int, N: int, budget: Optional[int] = None) -> int:
    limit = DEFAULT_MAX_GRID_POINTS if budget is None else budget
    size = N**n
    if size > limit:
        raise ResourceBudgetError(
            f"grid of {N}^{n} = {size} points exceeds budget of {limit} points"
        )
    return size


@dataclass(frozen=True)
class ProjectionMatrix:
    """The d x n real matrix mapping integer modes to physical wavevectors."""

    entries: np.ndarray

    def __post_init__(self):
        P = np.array(self.entries, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.ndim != 2:
            raise ValueError("projection matrix must be two-dimensional")
        d, n = P.shape
        if d < 1 or n < d:
            raise ValueError(f"need n >= d >= 1, got d={d}, n={n}")
        if not np.all(np.isfinite(P)):
            raise ValueError("projection matrix entries must be finite")
        sv = np.linalg.svd(P, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("projection matrix must have full row rank")
        if np.any(np.all(P == 0.0, axis=0)):
            raise ValueError("projection matrix has a zero column")
        P.setflags(write=False)
        object.__setattr__(self, "entries", P)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ProjectionMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def axis_frequencies(N: int) -> np.ndarray:
    """Integer frequencies of one axis in DFT storage order."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return np.fft.fftfreq(N, d=1.0 / N).round().astype(np.int64)


@dataclass(frozen=True, eq=False)
class FrequencyIndexSet:
    """Ordered set of integer modes with their positions in the DFT grid.

    ``indices`` has shape ``(size, n)`` and is sorted lexicographically;
    ``grid_positions[i]`` is the row-major linear offset of ``indices[i]``
    inside an ``(N,)*n`` array laid out in DFT order.
    """

    indices: np.ndarray
    N: int
    kind: Literal["full", "reduced"]
    D: Optional[float] = None
    norm: Norm = "2"
    grid_positions: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2:
            raise ValueError("indices must have shape (size, n)")
        pos = _grid_positions(idx, self.N) if self.grid_positions is None else np.asarray(self.grid_positions)
        idx.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "grid_positions", pos)

    @property
    def n(self) -> int:
        return self.indices.shape[1]

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    def __len__(self) -> int:
        return self.size

    def position_of(self, k) -> int:
        """Position of mode ``k`` in this set's order (``KeyError`` if absent)."""
        k = np.asarray(k, dtype=np.int64)
        hits = np.flatnonzero(np.all(self.indices == k, axis=1))
        if hits.size == 0:
            raise KeyError(tuple(k.tolist()))
        return int(hits[0])


def _grid_positions(idx: np.ndarray, N: int) -> np.ndarray:
    n = idx.shape[1]
    strides = N ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (np.mod(idx, N) * strides).sum(axis=1)


def _full_grid(n: int, N: int) -> np.ndarray:
    # np.sort on the axis values keeps C-order raveling lexicographic.
    axis = np.sort(axis_frequencies(N))
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def build_full_index_set(n: int, N: int, budget: Optional[int] = None) -> FrequencyIndexSet:
    """The full tensor set of ``N**n`` modes."""
    if n < 1 or N < 1:
        raise ValueError("need n >= 1 and N >= 1")
    check_budget(n, N, budget)
    return FrequencyIndexSet(_full_grid(n, N), N=N, kind="full")


def projected_norms(P: ProjectionMatrix, indices: np.ndarray, norm: Norm = "2") -> np.ndarray:
    q = np.asarray(indices, dtype=float) @ P.entries.T
    if norm == "2":
        return np.sqrt(np.einsum("ij,ij->i", q, q))
    if norm == "inf":
        return np.abs(q).max(axis=1)
    raise ValueError(f"unknown truncation norm {norm!r}")


def build_reduced_index_set(
    P: ProjectionMatrix,
    N: int,
    D: float,
    norm: Norm = "2",
    budget: Optional[int] = None,
) -> FrequencyIndexSet:
    """Grid modes whose projected wavevector satisfies ``|P k| <= D``.

    ``norm="2"`` uses the Euclidean length of ``P k``; ``norm="inf"`` uses
    its largest component, which factorizes the 2D moire set over the two
    physical axes.  Both coincide when d = 1.
    """
    if D < 0:
        raise ValueError("truncation radius D must be non-negative")
    check_budget(P.n, N, budget)
    grid = _full_grid(P.n, N)
    keep = projected_norms(P, grid, norm) <= D
    return FrequencyIndexSet(grid[keep], N=N, kind="reduced", D=float(D), norm=norm)


def max_projected_norm(P: ProjectionMatrix, N: int, norm: Norm = "2") -> float:
    """Largest ``|P k|`` over the full grid; any ``D`` above it saturates."""
    return float(projected_norms(P, _full_grid(P.n, N), norm).max())


def _as_modes(P: ProjectionMatrix, k) -> np.ndarray:
    k = np.asarray(k)
    if k.shape[-1] != P.n:
        raise ValueError(f"mode has {k.shape[-1]} components, projection expects {P.n}")
    return k


def project_wavevector(P: ProjectionMatrix, k) -> np.ndarray:
    """``q = P @ k``.  Accepts a single mode or an array of modes (last axis n)."""
    k = _as_modes(P, k)
    return np.asarray(k, dtype=float) @ P.entries.T


def kinetic_value(P: ProjectionMatrix, k):
    """Half the squared physical wavevector length, the symbol of ``-Laplacian/2``."""
    q = project_wavevector(P, k)
    return 0.5 * np.sum(q * q, axis=-1)
