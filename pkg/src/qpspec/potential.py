"""Built-in quasiperiodic potentials and their periodic parents.

Every parent is 2*pi-periodic in each raised coordinate.  The built-ins are

``qp1d_sqrt5``
    ``v(z) = E0 / (1 + (cos z + cos(sqrt5 z))^2)`` with ``P = [sqrt5, 1]``,
    so ``x1 = sqrt5 z`` and ``x2 = z``.
``qp1d_theta``
    ``v(z) = E0 / ((cos(2cos(t/2) z) + cos(2sin(t/2) z))^2 + 1)`` with
    ``P = [2cos(t/2), 2sin(t/2)]``.
``qp2d_moire``
    ``v(z) = E0 / ((cos z1 cos z2 + cos(sqrt5 z1) cos(sqrt5 z2))^2 + 1)``
    with the 2 x 4 matrix ``[[1, 0, sqrt5, 0], [0, 1, 0, sqrt5]]``.

``constant`` and ``grid_file`` carry no projection of their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .lattice import ProjectionMatrix, check_budget

BUILTIN_KINDS = ("qp1d_sqrt5", "qp1d_theta", "qp2d_moire")
KINDS = BUILTIN_KINDS + ("grid_file", "constant")

SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class PotentialSpec:
    """Which potential to use and its parameters.

    ``offset`` is a constant added to any kind; it exists so a potential
    and its uniformly shifted copy can be compared directly.
    """

    kind: str
    E0: float = 1.0
    theta: float = math.pi / 6
    path: Optional[str] = None
    c: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if self.E0 < 0:
            raise ValueError("E0 must be non-negative")
        if self.kind == "grid_file" and not self.path:
            raise ValueError("grid_file potential needs a path")

    @property
    def raised_dim(self) -> Optional[int]:
        """Dimension of the parent, or ``None`` when any dimension is valid."""
        if self.kind in ("qp1d_sqrt5", "qp1d_theta"):
            return 2
        if self.kind == "qp2d_moire":
            return 4
        if self.kind == "grid_file":
            return read_grid_file(self.path).n
        return None


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples on the uniform grid ``x_j = 2*pi*m/N`` (row-major, shape ``(N,)*n``)."""

    n: int
    N: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size != self.N**self.n:
            raise ValueError(f"expected {self.N**self.n} samples, got {v.size}")
        v = v.reshape((self.N,) * self.n)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid samples must be finite")
        object.__setattr__(self, "values", v)


def grid_axis(N: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(N) / N


def _check_dim(spec: PotentialSpec, n: int) -> None:
    want = spec.raised_dim
    if want is not None and n != want:
        raise ValueError(f"{spec.kind} has raised dimension {want}, got points of dimension {n}")


def _builtin_parent(kind: str, E0: float, x: np.ndarray) -> np.ndarray:
    c = np.cos(x)
    if kind in ("qp1d_sqrt5", "qp1d_theta"):
        s = c[..., 0] + c[..., 1]
    else:
        s = c[..., 0] * c[..., 1] + c[..., 2] * c[..., 3]
    return E0 / (1.0 + s * s)


def parent_value(spec: PotentialSpec, x) -> np.ndarray | float:
    """Evaluate the parent ``V`` at raised point(s) ``x`` (last axis = n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    _check_dim(spec, n)
    if spec.kind in BUILTIN_KINDS:
        out = _builtin_parent(spec.kind, spec.E0, x)
    elif spec.kind == "constant":
        out = np.full(x.shape[:-1], spec.c, dtype=float)
    else:
        out = _trig_interpolate(read_grid_file(spec.path), x)
    out = out + spec.offset
    return float(out) if np.ndim(out) == 0 else out


def _trig_interpolate(field: GridField, x: np.ndarray) -> np.ndarray:
    # Exact for the band-limited interpolant of the samples.
    coeffs = np.fft.fftn(field.values) / field.values.size
    freqs = np.fft.fftfreq(field.N, d=1.0 / field.N)
    mesh = np.meshgrid(*([freqs] * field.n), indexing="ij")
    modes = np.stack([m.ravel() for m in mesh], axis=1)
    pts = x.reshape(-1, field.n)
    vals = np.exp(1j * pts @ modes.T) @ coeffs.ravel()
    return vals.real.reshape(x.shape[:-1])


def canonical_projection(spec: PotentialSpec) -> ProjectionMatrix:
    """The projection matrix that makes the built-in parent 2*pi-periodic."""
    if spec.kind == "qp1d_sqrt5":
        return ProjectionMatrix([[SQRT5, 1.0]])
    if spec.kind == "qp1d_theta":
        t = spec.theta / 2
        return ProjectionMatrix([[2 * math.cos(t), 2 * math.sin(t)]])
    if spec.kind == "qp2d_moire":
        return ProjectionMatrix([[1.0, 0.0, SQRT5, 0.0], [0.0, 1.0, 0.0, SQRT5]])
    raise ValueError(f"{spec.kind} potential has no canonical projection; supply one explicitly")


def sample_parent_grid(
    spec: PotentialSpec, N: int, n: Optional[int] = None, budget: Optional[int] = None
) -> GridField:
    """Sample the parent on the ``(N,)*n`` grid.

    ``n`` defaults to the raised dimension of the kind and is required for
    ``constant``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    want = spec.raised_dim
    if n is None:
        if want is None:
            raise ValueError(f"{spec.kind} potential needs an explicit raised dimension")
        n = want
    elif want is not None and n != want:
        raise ValueError(f"{spec.kind} has raised dimension {want}, requested {n}")
    check_budget(n, N, budget)
    if spec.kind == "constant":
        return GridField(n, N, np.full((N,) * n, spec.c + spec.offset))
    if spec.kind == "grid_file":
        field = read_grid_file(spec.path)
        if field.N != N:
            raise ValueError(f"grid file has N={field.N}, requested N={N}")
        return GridField(n, N, field.values + spec.offset)
    # Separable broadcasting avoids materialising an (N**n, n) point list.
    axis = grid_axis(N)
    cos = [np.cos(axis).reshape((1,) * j + (N,) + (1,) * (n - j - 1)) for j in range(n)]
    if spec.kind == "qp2d_moire":
        s = cos[0] * cos[1] + cos[2] * cos[3]
    else:
        s = cos[0] + cos[1]
    values = spec.E0 / (1.0 + s * s) + spec.offset
    return GridField(n, N, np.broadcast_to(values, (N,) * n).copy())


def physical_value(spec: PotentialSpec, P: ProjectionMatrix, z) -> np.ndarray | float:
    """``v(z) = V(P^T z)`` for physical point(s) ``z`` (last axis = d)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != P.d:
        raise ValueError(f"point has dimension {z.shape[-1]}, projection expects {P.d}")
    return parent_value(spec, z @ P.entries)


@lru_cache(maxsize=8)
def _read_grid_file_cached(path: str, mtime: float) -> GridField:
    raw = Path(path).read_bytes()
    header, sep, body = raw.partition(b"\n")
    if not sep:
        raise ValueError(f"{path}: missing header line")
    try:
        n, N = (int(t) for t in header.split())
    except ValueError as exc:
        raise ValueError(f"{path}: header must be 'n N'") from exc
    values = np.frombuffer(body, dtype="<f8")
    if values.size != N**n:
        raise ValueError(f"{path}: expected {N**n} samples, found {values.size}")
    return GridField(n, N, values.astype(float))


def read_grid_file(path) -> GridField:
    """Read a grid file: text header ``"n N"`` then little-endian float64 samples."""
    p = Path(path)
    return _read_grid_file_cached(str(p), p.stat().st_mtime)


def write_grid_file(path, field: GridField) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{field.n} {field.N}\n".encode())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
