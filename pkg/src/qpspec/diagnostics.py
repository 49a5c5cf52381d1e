"""Error metrics, physical-space reconstruction and localization measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import FrequencyIndexSet, ProjectionMatrix, projected_norms

# Largest number of (point, mode) products formed at once by direct summation.
_CHUNK = 1 << 22


@dataclass
class PhysicalSamples:
    points: np.ndarray  # (count, d)
    values: np.ndarray  # (count,)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("points and values must have equal length")

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass
class DecayProfile:
    qnorm: np.ndarray
    magnitude: np.ndarray

    def __len__(self) -> int:
        return self.qnorm.size


def _unit(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    nu = np.linalg.norm(u)
    if nu == 0.0:
        raise ValueError("coefficient vector is zero")
    return u / nu


def truncation_error(
    u, index_set: FrequencyIndexSet, P: ProjectionMatrix, D: float, norm: str = "2"
) -> float:
    """Tail mass ``sum |U_k|^2`` over modes with ``|P k| > D`` of the normalized ``u``."""
    if index_set.n != P.n or len(u) != index_set.size:
        raise ValueError("coefficients, index set and projection do not agree")
    w = np.abs(_unit(u)) ** 2
    return float(w[projected_norms(P, index_set.indices, norm) > D].sum())


def truncation_curve(u, index_set, P, Ds: Sequence[float], norm: str = "2") -> np.ndarray:
    """:func:`truncation_error` at every ``D`` in ``Ds`` with one sort."""
    w = np.abs(_unit(u)) ** 2
    q = projected_norms(P, index_set.indices, norm)
    order = np.argsort(q)
    q, w = q[order], w[order]
    # Suffix sums of the sorted weights are the tail masses.
    tails = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    return np.array([tails[np.searchsorted(q, D, side="right")] for D in Ds])


def evaluate_physical(u, index_set: FrequencyIndexSet, P: ProjectionMatrix, points) -> PhysicalSamples:
    """``u(z) = sum_k U_k exp(i <P k, z>)`` by direct summation."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (index_set.size,):
        raise ValueError("coefficients are not aligned to the index set")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != P.d:
        raise ValueError(f"points have dimension {pts.shape[1]}, projection expects {P.d}")
    q = index_set.indices @ P.entries.T  # (m, d)
    out = np.empty(pts.shape[0], dtype=complex)
    step = max(1, _CHUNK // max(1, index_set.size))
    for a in range(0, pts.shape[0], step):
        phase = pts[a : a + step] @ q.T
        out[a : a + step] = np.exp(1j * phase) @ u
    return PhysicalSamples(pts, out)


def evaluate_on_box(u, index_set: FrequencyIndexSet, P: ProjectionMatrix, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Series values on the tensor grid ``axes[0] x ... x axes[d-1]``.

    Modes are grouped by the components that each physical coordinate
    actually depends on, which collapses the sum into one small matrix
    product per axis whenever rows of ``P`` have disjoint supports (the
    moire case).  Values match :func:`evaluate_physical` on the same points.
    """
    u = np.asarray(u, dtype=complex)
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != P.d:
        raise ValueError(f"need {P.d} axes, got {len(axes)}")
    k = index_set.indices
    groups, freqs = [], []
    for i in range(P.d):
        support = np.flatnonzero(P.entries[i] != 0.0)
        keys, gid = np.unique(k[:, support], axis=0, return_inverse=True)
        groups.append(gid.reshape(-1))
        freqs.append(keys @ P.entries[i, support])
    dims = tuple(f.size for f in freqs)
    if np.prod(dims, dtype=float) > 4 * _CHUNK:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return evaluate_physical(u, index_set, P, pts).values.reshape(mesh[0].shape)
    A = np.zeros(dims, dtype=complex)
    np.add.at(A, tuple(groups), u)
    for i in range(P.d):
        E = np.exp(1j * np.outer(axes[i], freqs[i]))
        A = np.moveaxis(np.tensordot(E, A, axes=([1], [i])), 0, i)
    return A


def box_axes(lo: Sequence[float], hi: Sequence[float], samples: Sequence[int]) -> list[np.ndarray]:
    """Cell-centred sample coordinates of a box; returns per-axis arrays."""
    return [lo_i + (np.arange(n) + 0.5) * (hi_i - lo_i) / n for lo_i, hi_i, n in zip(lo, hi, samples)]


def sample_box(u, index_set, P, lo, hi, samples) -> PhysicalSamples:
    """Series values at the cell centres of a box, as row-major :class:`PhysicalSamples`."""
    axes = box_axes(lo, hi, samples)
    values = evaluate_on_box(u, index_set, P, axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    return PhysicalSamples(np.stack([m.ravel() for m in mesh], axis=1), values.ravel())


def eigenvalue_error(a, b, count: int) -> float:
    """Largest absolute difference among the first ``count`` eigenvalues."""
    Ea = np.sort(np.asarray(getattr(a, "eigenvalues", a), dtype=float))
    Eb = np.sort(np.asarray(getattr(b, "eigenvalues", b), dtype=float))
    if count < 1 or Ea.size < count or Eb.size < count:
        raise ValueError(f"need at least {count} eigenvalues in both sets")
    return float(np.max(np.abs(Ea[:count] - Eb[:count])))


def _l2(values, w) -> float:
    return float(np.sqrt(w * np.sum(np.abs(values) ** 2)))


def eigenfunction_l2_error(a: PhysicalSamples, b: PhysicalSamples, cell_volume: float) -> float:
    """Discrete L2 distance after normalizing both and removing the global phase."""
    if a.points.shape != b.points.shape or not np.allclose(a.points, b.points, rtol=0, atol=1e-12):
        raise ValueError("samples must share the same points")
    na, nb = _l2(a.values, cell_volume), _l2(b.values, cell_volume)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cannot normalize a zero field")
    va, vb = a.values / na, b.values / nb
    ip = cell_volume * np.sum(va * vb.conj())
    if abs(ip) > 0.0:
        va = va * (np.conj(ip) / abs(ip))
    return _l2(va - vb, cell_volume)


def decay_profile(u, index_set: FrequencyIndexSet, P: ProjectionMatrix, norm: str = "2") -> DecayProfile:
    u = np.asarray(u)
    if u.shape != (index_set.size,):
        raise ValueError("coefficients are not aligned to the index set")
    q = projected_norms(P, index_set.indices, norm)
    order = np.argsort(q, kind="stable")
    return DecayProfile(q[order], np.abs(u)[order])


def envelope_slope(profile: DecayProfile, bins: int = 20, floor: float = 1e-300) -> float:
    """Least-squares slope of log|U| against |q| over the per-bin maxima."""
    q, m = profile.qnorm, profile.magnitude
    edges = np.linspace(q.min(), q.max(), bins + 1)
    xs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (q >= lo) & (q <= hi)
        if np.any(sel) and m[sel].max() > floor:
            j = np.argmax(np.where(sel, m, -1.0))
            xs.append(q[j])
            ys.append(np.log(m[j]))
    if len(xs) < 2:
        raise ValueError("not enough non-zero bins to fit a slope")
    return float(np.polyfit(xs, ys, 1)[0])


def participation_ratio(u: PhysicalSamples | np.ndarray, cell_volume: float) -> float:
    """``(sum |u|^2 w)^2 / sum |u|^4 w``; smaller values mean stronger localization."""
    vals = u.values if isinstance(u, PhysicalSamples) else np.asarray(u)
    p2 = np.abs(vals) ** 2
    den = cell_volume * np.sum(p2 * p2)
    if den == 0.0:
        raise ValueError("participation ratio of a zero field")
    return float((cell_volume * p2.sum()) ** 2 / den)
