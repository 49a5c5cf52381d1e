"""Contour-integral spectral indicator for checking computed eigenvalues.

For a square region in the complex plane the spectral projector is
approximated by the closed trapezoidal rule on the square's boundary, each
node costing one shifted solve ``(H - s I) r = f`` by restarted GMRES.  The
indicator ``||Q (Qf / ||Qf||)||`` is close to one when an eigenvalue lies
inside the square and close to zero when none does.

The four-vertex rule is coarse: an eigenvalue at the centre of the square
receives weight 2/pi and one at twice the half-width still receives about
0.13.  Rejecting spurious values at the 1e-3 level needs more nodes per
edge (``n0=64`` brings the latter weight to about 4e-4).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .eigensolver import inner_products

DEFAULT_THRESHOLD = 0.1

# Largest Krylov basis (in complex entries) kept for the shared multi-shift solve.
SHARED_BASIS_LIMIT = 2**24


class ResolventError(RuntimeError):
    """GMRES failed to solve a shifted system, usually because the shift is too close to the spectrum."""


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-8
    restart: int = 50
    max_iters: int = 2000

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError("GMRES tol must lie in (0, 1)")
        if self.restart < 1 or self.max_iters < 1:
            raise ValueError("GMRES restart and max_iters must be positive")


@dataclass(frozen=True)
class IndicatorRegion:
    center: complex
    half_width: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n0(self) -> int:
        return len(self.nodes)

    def contains(self, z: complex) -> bool:
        dz = z - self.center
        return abs(dz.real) < self.half_width and abs(dz.imag) < self.half_width


def make_square_region(center: complex, half_width: float, n0: int = 4) -> IndicatorRegion:
    """Square of side ``2*half_width`` with ``n0`` trapezoidal nodes, counter-clockwise.

    Nodes start at the upper-right vertex; ``n0 = 4`` uses only the
    vertices and larger multiples of four add equispaced points per edge.
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    if n0 < 4 or n0 % 4:
        raise ValueError("n0 must be a multiple of 4 and at least 4")
    per_edge = n0 // 4
    unit = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])
    t = np.arange(per_edge) / per_edge
    edges = [unit[a] + (unit[(a + 1) % 4] - unit[a]) * t for a in range(4)]
    nodes = complex(center) + half_width * np.concatenate(edges)
    weights = (np.roll(nodes, -1) - np.roll(nodes, 1)) / 2
    return IndicatorRegion(complex(center), float(half_width), nodes, weights)


def resolvent_apply(H, s: complex, f, g: Optional[GmresConfig] = None) -> np.ndarray:
    """Solve ``(H - s I) r = f`` to relative residual ``g.tol`` with restarted GMRES."""
    g = g or GmresConfig()
    f = np.asarray(f, dtype=complex)
    nf = np.linalg.norm(f)
    if nf == 0.0:
        return np.zeros_like(f)
    A = LinearOperator(H.shape, matvec=lambda x: H.apply_shifted(s, x.ravel()), dtype=complex)
    restart = min(g.restart, H.size)
    cycles = max(1, math.ceil(g.max_iters / restart))
    r, info = gmres(A, f, rtol=g.tol, atol=0.0, restart=restart, maxiter=cycles)
    true_res = np.linalg.norm(H.apply_shifted(s, r) - f)
    if true_res > g.tol * nf and info == 0:
        # GMRES judges its own recurrence residual; polish once from the iterate.
        r, info = gmres(A, f, x0=r, rtol=g.tol, atol=0.0, restart=restart, maxiter=cycles)
        true_res = np.linalg.norm(H.apply_shifted(s, r) - f)
    if info != 0 or true_res > g.tol * nf:
        raise ResolventError(
            f"GMRES at shift {s:.6g} stopped with relative residual {true_res / nf:.3g} (info={info})"
        )
    return r


def _givens(a, b):
    """Complex rotation ``(c, s, r)`` with ``[[c, s], [-conj(s), c]] @ (a, b) = (r, 0)``."""
    ra = np.abs(a)
    rho = np.hypot(ra, np.abs(b))
    safe_ra = np.where(ra == 0, 1.0, ra)
    phase = np.where(ra == 0, 1.0, a / safe_ra)
    safe_rho = np.where(rho == 0, 1.0, rho)
    c = np.where(rho == 0, 1.0, ra / safe_rho)
    s = np.where(ra == 0, 1.0 + 0j, phase * np.conj(b) / safe_rho)
    s = np.where(rho == 0, 0j, s)
    return c, s, phase * rho


def shifted_solves(H, shifts: Sequence[complex], f, g: Optional[GmresConfig] = None) -> list[np.ndarray]:
    """Minimal-residual solutions of ``(H - s I) r = f`` for many shifts from one Krylov basis.

    The Krylov space of ``H - sI`` started at ``f`` does not depend on
    ``s``, so a single Lanczos basis (fully reorthogonalized) serves every
    shift.  Each shift keeps its own QR factorization of the shifted
    tridiagonal by Givens rotations, which makes each returned vector the
    unrestarted GMRES iterate for that shift.  The true residual of every
    solution is checked before returning.
    """
    g = g or GmresConfig()
    shifts = np.asarray(shifts, dtype=complex).reshape(-1)
    f = np.asarray(f, dtype=complex)
    beta0 = float(np.linalg.norm(f))
    ns = shifts.size
    if beta0 == 0.0:
        return [np.zeros_like(f) for _ in range(ns)]
    m_max = min(g.max_iters, H.size)
    V = np.empty((m_max + 1, f.size), dtype=complex)
    V[0] = f / beta0
    Rd = np.zeros((ns, m_max), complex)
    R1 = np.zeros((ns, m_max), complex)
    R2 = np.zeros((ns, m_max), complex)
    gam = np.zeros((ns, m_max + 1), complex)
    gam[:, 0] = beta0
    c_prev = np.ones((2, ns))
    s_prev = np.zeros((2, ns), complex)
    beta_prev = 0.0
    m = 0
    for j in range(m_max):
        w = H.apply(V[j])
        basis = V[: j + 1]
        alpha = 0.0
        for _ in range(2):
            h = inner_products(basis, w)
            w = w - h @ basis
            alpha += h[j].real
        beta = float(np.linalg.norm(w))
        # Column j of the shifted tridiagonal: (beta_{j-1}, alpha_j - s, beta_j).
        r0 = s_prev[0] * beta_prev
        r1 = c_prev[0] * beta_prev
        x, y = r1, alpha - shifts
        r1 = c_prev[1] * x + s_prev[1] * y
        r2 = -np.conj(s_prev[1]) * x + c_prev[1] * y
        c, sn, rr = _givens(r2, np.full(ns, beta, complex))
        Rd[:, j] = rr
        if j >= 1:
            R1[:, j - 1] = r1
        if j >= 2:
            R2[:, j - 2] = r0
        gam[:, j + 1] = -np.conj(sn) * gam[:, j]
        gam[:, j] = c * gam[:, j]
        c_prev = np.stack([c_prev[1], c])
        s_prev = np.stack([s_prev[1], sn])
        beta_prev = beta
        m = j + 1
        if np.all(np.abs(gam[:, j + 1]) <= 0.5 * g.tol * beta0) or beta <= 64 * np.finfo(float).eps * max(1.0, abs(alpha)):
            break
        V[j + 1] = w / beta
    Y = np.zeros((ns, m), complex)
    for i in range(m - 1, -1, -1):
        acc = gam[:, i].copy()
        if i + 1 < m:
            acc -= R1[:, i] * Y[:, i + 1]
        if i + 2 < m:
            acc -= R2[:, i] * Y[:, i + 2]
        Y[:, i] = acc / Rd[:, i]
    X = Y @ V[:m]
    out = []
    for s, r in zip(shifts, X):
        res = np.linalg.norm(H.apply_shifted(s, r) - f)
        if not res <= g.tol * beta0:
            raise ResolventError(
                f"shifted Krylov solve at shift {s:.6g} reached relative residual {res / beta0:.3g} after {m} steps"
            )
        out.append(r)
    return out


def _shared_basis_fits(H, g: GmresConfig) -> bool:
    return H.size * min(g.max_iters, H.size) <= SHARED_BASIS_LIMIT


def projector_apply(
    H,
    region: IndicatorRegion,
    f,
    g: Optional[GmresConfig] = None,
    workers: int = 1,
    method: str = "auto",
) -> np.ndarray:
    """Quadrature approximation of the Riesz projector onto eigenvalues inside ``region``.

    Uses ``(1/(2 pi i)) * sum_j w_j (s_j I - H)^{-1} f``, so the result is
    +f for an eigenvector well inside the square.  ``method="shared"``
    solves all nodes with :func:`shifted_solves`; ``"restarted"`` runs
    :func:`resolvent_apply` per node, optionally on ``workers`` threads.
    ``"auto"`` picks the shared basis when it fits in memory.
    """
    g = g or GmresConfig()
    f = np.asarray(f, dtype=complex)
    if method == "auto":
        method = "shared" if workers <= 1 and _shared_basis_fits(H, g) else "restarted"
    if method == "shared":
        sols = shifted_solves(H, region.nodes, f, g)
    elif method != "restarted":
        raise ValueError(f"unknown resolvent method {method!r}")
    elif workers > 1:
        clones = [H.clone() for _ in range(workers)]

        def run(w):
            return [resolvent_apply(clones[w], s, f, g) for s in region.nodes[w::workers]]

        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, range(workers)))
        sols = [None] * region.n0
        for w, chunk in enumerate(chunks):
            sols[w::workers] = chunk
    else:
        sols = [resolvent_apply(H, s, f, g) for s in region.nodes]
    acc = np.zeros_like(f)
    for w, r in zip(region.weights, sols):
        acc += w * r
    return -acc / (2j * np.pi)


def indicator_value(
    H, region: IndicatorRegion, f, g: Optional[GmresConfig] = None, workers: int = 1, method: str = "auto"
) -> float:
    """``||Q (Qf / ||Qf||)||``, or 0 when ``Qf`` vanishes relative to ``f``."""
    f = np.asarray(f, dtype=complex)
    w = projector_apply(H, region, f, g, workers, method)
    nw = np.linalg.norm(w)
    if nw <= 1e-14 * np.linalg.norm(f):
        return 0.0
    return float(np.linalg.norm(projector_apply(H, region, w / nw, g, workers, method)))


def probe_vector(H, kind: str = "potential+random", seed: int = 0) -> np.ndarray:
    """Starting vector for the indicator.

    ``"potential"`` is the potential's Fourier coefficients on the index set.
    The built-in potentials are even, which makes that vector orthogonal to
    every odd eigenvector, so the default adds an equal-weight seeded random
    part.  A numerically zero potential vector falls back to the random one.
    """
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal(H.size) + 1j * rng.standard_normal(H.size)
    rand /= np.linalg.norm(rand)
    if kind == "random" or not hasattr(H, "potential_coefficients"):
        return rand
    pot = H.potential_coefficients().reshape(-1)[H.index_set.grid_positions].astype(complex)
    npot = np.linalg.norm(pot)
    if npot <= 1e-14 * max(1.0, np.abs(H.potential.values).max()):
        return rand
    pot = pot / npot
    if kind == "potential":
        return pot
    if kind == "potential+random":
        v = pot + rand
        return v / np.linalg.norm(v)
    raise ValueError(f"unknown probe kind {kind!r}")


def _eigenvalues_of(pairs) -> np.ndarray:
    if hasattr(pairs, "eigenvalues"):
        return np.asarray(pairs.eigenvalues, dtype=float)
    return np.asarray(list(pairs), dtype=float)


def eigenvalue_indicators(
    H,
    pairs,
    half_width,
    g: Optional[GmresConfig] = None,
    n0: int = 4,
    probe: str = "potential+random",
    seed: int = 0,
    workers: int = 1,
    method: str = "auto",
) -> list[float]:
    """Indicator of a square centred at each eigenvalue.

    ``half_width`` is one value for all squares or one per eigenvalue.
    """
    E = _eigenvalues_of(pairs)
    widths = np.broadcast_to(np.asarray(half_width, dtype=float), E.shape)
    if E.size == 0:
        return []
    f = probe_vector(H, probe, seed)
    return [
        indicator_value(H, make_square_region(e, h, n0), f, g, workers, method) for e, h in zip(E, widths)
    ]


def validate_eigenvalues(
    H,
    pairs,
    half_width,
    threshold: float = DEFAULT_THRESHOLD,
    g: Optional[GmresConfig] = None,
    n0: int = 4,
    probe: str = "potential+random",
    seed: int = 0,
    workers: int = 1,
    method: str = "auto",
) -> list[bool]:
    """Accept each eigenvalue whose indicator reaches ``threshold``; others are spurious."""
    values = eigenvalue_indicators(H, pairs, half_width, g, n0, probe, seed, workers, method)
    return [v >= threshold for v in values]


def local_half_widths(centers: Sequence[float], spectrum: Sequence[float], fraction: float = 0.5) -> np.ndarray:
    """``fraction`` times the distance from each centre to the nearest other spectrum point."""
    centers = np.asarray(centers, dtype=float)
    spectrum = np.asarray(spectrum, dtype=float)
    out = np.empty(centers.size)
    for i, c in enumerate(centers):
        d = np.abs(spectrum - c)
        d = d[d > 1e-12 * max(1.0, abs(c))]
        if d.size == 0:
            raise ValueError("no other spectrum point to measure a gap against")
        out[i] = fraction * d.min()
    return out
