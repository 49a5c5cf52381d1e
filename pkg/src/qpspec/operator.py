"""Matrix-free discretized Hamiltonian ``H = K + V`` on a Fourier index set.

``K`` is the kinetic diagonal ``|P k|^2 / 2``.  The potential acts by
convolution with the parent's Fourier coefficients, applied through FFTs on
the full ``(N,)*n`` grid: coefficients are scattered into a zero-filled
buffer, brought to grid samples by the inverse DFT (which carries the
``1/N**n`` factor), multiplied by ``V``, transformed back by the forward DFT
and gathered at the set's positions.  No padding is applied, so products are
aliased on the ``N**n`` grid.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.fft

from .lattice import FrequencyIndexSet, ProjectionMatrix, kinetic_value
from .potential import GridField, PotentialSpec, sample_parent_grid

DEFAULT_DENSE_CAP = 4096


class HamiltonianOperator:
    """Discretized Schrodinger operator on one index set.

    The zero-filled FFT buffer is owned by the instance, so ``apply`` must
    not be called concurrently on the same object; use :meth:`clone` to get
    an independent instance that shares the read-only data.
    """

    def __init__(
        self,
        index_set: FrequencyIndexSet,
        P: ProjectionMatrix,
        potential: GridField,
        kinetic: Optional[np.ndarray] = None,
    ):
        if potential.N != index_set.N or potential.n != index_set.n:
            raise ValueError(
                f"potential grid (n={potential.n}, N={potential.N}) does not match "
                f"index set (n={index_set.n}, N={index_set.N})"
            )
        if P.n != index_set.n:
            raise ValueError(f"projection has n={P.n}, index set has n={index_set.n}")
        self.index_set = index_set
        self.P = P
        self.potential = potential
        if kinetic is None:
            kinetic = kinetic_value(P, index_set.indices)
        self.kinetic = np.asarray(kinetic, dtype=float)
        self.kinetic.setflags(write=False)
        self._positions = index_set.grid_positions
        self._full = index_set.size == potential.values.size
        self._buffer = np.zeros(index_set.grid_shape, dtype=complex)
        self._vhat = None
        self.matvec_count = 0

    @property
    def size(self) -> int:
        return self.index_set.size

    @property
    def dtype(self):
        return np.dtype(complex)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.size, self.size)

    def clone(self) -> "HamiltonianOperator":
        return HamiltonianOperator(self.index_set, self.P, self.potential, self.kinetic)

    def potential_coefficients(self) -> np.ndarray:
        """Parent Fourier coefficients of ``V`` on the full grid, DFT layout."""
        if self._vhat is None:
            self._vhat = scipy.fft.fftn(self.potential.values) / self.potential.values.size
            self._vhat.setflags(write=False)
        return self._vhat

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != (self.size,):
            raise ValueError(f"vector of shape {f.shape} is not aligned to an index set of size {self.size}")
        return f

    def apply(self, f) -> np.ndarray:
        f = self._check(f)
        self.matvec_count += 1
        buf = self._buffer
        flat = buf.reshape(-1)
        if not self._full:
            flat[:] = 0.0
        flat[self._positions] = f
        g = scipy.fft.ifftn(buf, overwrite_x=True)
        g *= self.potential.values
        g = scipy.fft.fftn(g, overwrite_x=True)
        return self.kinetic * f + g.reshape(-1)[self._positions]

    __call__ = apply

    def apply_shifted(self, s: complex, f) -> np.ndarray:
        """``(H - s I) f``."""
        return self.apply(f) - s * np.asarray(f)

    def apply_reference(self, f) -> np.ndarray:
        """Direct O(size^2) double sum; an oracle for :meth:`apply`."""
        f = self._check(f)
        N = self.index_set.N
        idx = self.index_set.indices
        n = self.index_set.n
        if self.size > DEFAULT_DENSE_CAP:
            raise MemoryError(f"reference product limited to {DEFAULT_DENSE_CAP} modes")
        vhat = self.potential_coefficients().reshape(-1)
        strides = N ** np.arange(n - 1, -1, -1, dtype=np.int64)
        out = np.empty(self.size, dtype=complex)
        for i in range(self.size):
            diff = np.mod(idx[i] - idx, N) @ strides
            out[i] = self.kinetic[i] * f[i] + vhat[diff] @ f
        return out

    def dense_matrix(self, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
        """Assemble ``H`` column by column from :meth:`apply` (oracle use only)."""
        if self.size > cap:
            raise MemoryError(f"dense matrix of size {self.size} exceeds cap {cap}")
        A = np.empty((self.size, self.size), dtype=complex)
        e = np.zeros(self.size, dtype=complex)
        for j in range(self.size):
            e[j] = 1.0
            A[:, j] = self.apply(e)
            e[j] = 0.0
        return A


def build_operator(
    P: ProjectionMatrix,
    spec: PotentialSpec,
    index_set: FrequencyIndexSet,
    budget: Optional[int] = None,
) -> HamiltonianOperator:
    want = spec.raised_dim
    if want is not None and want != P.n:
        raise ValueError(f"{spec.kind} has raised dimension {want}, projection has n={P.n}")
    potential = sample_parent_grid(spec, index_set.N, n=P.n, budget=budget)
    return HamiltonianOperator(index_set, P, potential)


def apply(H: HamiltonianOperator, f) -> np.ndarray:
    return H.apply(f)


def apply_shifted(H: HamiltonianOperator, s: complex, f) -> np.ndarray:
    return H.apply_shifted(s, f)


def apply_reference(H: HamiltonianOperator, f) -> np.ndarray:
    return H.apply_reference(f)


def dense_matrix(H: HamiltonianOperator, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    return H.dense_matrix(cap)


class DenseOperator:
    """Wrap an explicit Hermitian matrix behind the operator interface (toys, oracles)."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=complex)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("expected a square matrix")
        self.matvec_count = 0

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def apply(self, f) -> np.ndarray:
        self.matvec_count += 1
        return self.A @ np.asarray(f)

    __call__ = apply

    def apply_shifted(self, s: complex, f) -> np.ndarray:
        return self.apply(f) - s * np.asarray(f)

    def dense_matrix(self, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
        return self.A.copy()

    def clone(self) -> "DenseOperator":
        return DenseOperator(self.A)
