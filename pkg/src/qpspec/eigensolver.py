"""Thick-restart Lanczos for the smallest eigenpairs of a Hermitian operator.

Every new Lanczos vector is reorthogonalized twice against the whole basis.
At a restart the wanted Ritz vectors (plus a buffer) are kept together with
the last residual direction, which turns the projected matrix into an
arrowhead; the recurrence then resumes from the residual direction.

A single starting vector only sees one direction per eigenspace, so
degenerate eigenvalues would be reported with multiplicity one.  After the
main run, :func:`solve_smallest` therefore repeats the iteration in the
orthogonal complement of the pairs it found and merges any eigenvalue that
turns up below the current k-th one.

For large plane-wave bases the Lanczos iteration count grows with the
kinetic spread ``||H||``.  ``method="lobpcg"`` instead runs scipy's block
LOBPCG preconditioned by ``(K + s)^-1``, with ``K`` the kinetic diagonal,
whose iteration count is nearly independent of the basis size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import warnings

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, lobpcg

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps

METHODS = ("lanczos", "lobpcg")


@dataclass(frozen=True)
class KrylovConfig:
    num_eigs: int = 5
    subspace_dim: Optional[int] = None
    tol: float = 1e-10
    max_restarts: int = 300
    seed: int = 0
    check_missed: bool = True
    method: str = "lanczos"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown eigensolver method {self.method!r}; expected one of {METHODS}")
        if self.num_eigs < 1:
            raise ValueError("num_eigs must be positive")
        if self.subspace_dim is not None and self.subspace_dim <= self.num_eigs:
            raise ValueError("subspace_dim must exceed num_eigs")
        if not 0.0 < self.tol < 1.0:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be positive")

    @property
    def M(self) -> int:
        if self.subspace_dim is not None:
            return self.subspace_dim
        return max(2 * self.num_eigs + 10, 40)


@dataclass
class EigenPair:
    E: float
    coefficients: np.ndarray
    residual: float
    converged: bool


@dataclass
class EigenPairSet:
    pairs: list[EigenPair] = field(default_factory=list)
    matvecs: int = 0
    restarts: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i) -> EigenPair:
        return self.pairs[i]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.E for p in self.pairs])

    @property
    def vectors(self) -> np.ndarray:
        """Eigenvectors as columns, shape ``(size, count)``."""
        if not self.pairs:
            return np.empty((0, 0), dtype=complex)
        return np.stack([p.coefficients for p in self.pairs], axis=1)

    @property
    def all_converged(self) -> bool:
        return all(p.converged for p in self.pairs)


def _random_start(rng: np.random.Generator, size: int) -> np.ndarray:
    v = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return v / np.linalg.norm(v)


def inner_products(basis: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``basis.conj() @ w`` without materialising a conjugated copy of ``basis``."""
    return (basis @ w.conj()).conj()


def _project_out(w: np.ndarray, basis: Optional[np.ndarray]) -> np.ndarray:
    # basis rows are orthonormal; two classical Gram-Schmidt passes.
    if basis is None or basis.shape[0] == 0:
        return w
    for _ in range(2):
        w = w - inner_products(basis, w) @ basis
    return w


@dataclass
class _LanczosResult:
    theta: np.ndarray
    vectors: np.ndarray  # rows
    estimates: np.ndarray
    converged: np.ndarray
    matvecs: int
    restarts: int


def thick_restart_lanczos(
    matvec: Callable[[np.ndarray], np.ndarray],
    size: int,
    k: int,
    M: int,
    tol: float,
    max_restarts: int,
    rng: np.random.Generator,
    locked: Optional[np.ndarray] = None,
) -> _LanczosResult:
    """Smallest ``k`` Ritz pairs of ``matvec`` restricted to the complement of ``locked``.

    Convergence is judged on the Lanczos residual estimate
    ``|beta_M * s_Mi| <= tol * max(1, |theta_i|)``.
    """
    avail = size - (0 if locked is None else locked.shape[0])
    if k > avail:
        raise ValueError(f"cannot compute {k} pairs in a space of dimension {avail}")
    M = min(M, avail)
    V = np.zeros((M + 1, size), dtype=complex)
    T = np.zeros((M, M))
    V[0] = _project_out(_random_start(rng, size), locked)
    V[0] /= np.linalg.norm(V[0])
    kept = 0
    matvecs = 0
    anorm = 0.0
    theta = estimates = S = None
    for restart in range(max_restarts + 1):
        m = M
        beta_last = 0.0
        for j in range(kept, M):
            w = matvec(V[j])
            matvecs += 1
            basis = V[: j + 1]
            alpha = 0.0
            for _ in range(2):
                if locked is not None:
                    w = w - inner_products(locked, w) @ locked
                h = inner_products(basis, w)
                w = w - h @ basis
                alpha += h[j].real
            T[j, j] = alpha
            beta = float(np.linalg.norm(w))
            anorm = max(anorm, abs(alpha) + beta)
            if beta <= 64 * _EPS * max(anorm, 1.0):
                # Invariant subspace: continue with a fresh direction if any remain.
                if j + 1 >= avail:
                    m = j + 1
                    beta_last = 0.0
                    break
                w = _project_out(_project_out(_random_start(rng, size), locked), V[: j + 1])
                w /= np.linalg.norm(w)
                beta = 0.0
            else:
                w = w / beta
            V[j + 1] = w
            if j + 1 < M:
                T[j, j + 1] = T[j + 1, j] = beta
            else:
                beta_last = beta
        theta, S = scipy.linalg.eigh(T[:m, :m])
        estimates = np.abs(beta_last * S[m - 1, :])
        scale = np.maximum(1.0, np.abs(theta))
        done = estimates[:k] <= tol * scale[:k]
        log.debug(
            "restart %d: %d matvecs, theta_1=%.15g, worst estimate %.3g, %d/%d converged",
            restart, matvecs, theta[0], float(np.max(estimates[:k] / scale[:k])), int(done.sum()), k,
        )
        if np.all(done) or m < M or restart == max_restarts:
            break
        # Keep the wanted pairs plus a buffer; the residual direction follows them.
        kept = min(m - 1, k + max(1, (m - k) // 2))
        V[:kept] = S[:, :kept].T @ V[:m]
        V[kept] = V[m]
        T[:] = 0.0
        T[np.arange(kept), np.arange(kept)] = theta[:kept]
        arrow = beta_last * S[m - 1, :kept]
        T[:kept, kept] = T[kept, :kept] = arrow
    vectors = S[:, :k].T @ V[:m]
    scale = np.maximum(1.0, np.abs(theta[:k]))
    return _LanczosResult(
        theta=theta[:k].copy(),
        vectors=vectors,
        estimates=estimates[:k].copy(),
        converged=estimates[:k] <= tol * scale,
        matvecs=matvecs,
        restarts=restart,
    )


def residual_norm(H, E: float, u) -> float:
    """``||H u - E u|| / ||u||``."""
    u = np.asarray(u)
    nu = np.linalg.norm(u)
    if nu == 0.0:
        raise ValueError("residual of the zero vector is undefined")
    return float(np.linalg.norm(H.apply(u) - E * u) / nu)


def _finalize(H, theta, vectors, tol) -> list[EigenPair]:
    pairs = []
    for E, v in zip(theta, vectors):
        v = v / np.linalg.norm(v)
        r = residual_norm(H, float(E), v)
        pairs.append(EigenPair(float(E), v, r, r <= tol * max(1.0, abs(E))))
    return pairs


def solve_smallest(H, cfg: KrylovConfig) -> EigenPairSet:
    """The ``cfg.num_eigs`` algebraically smallest eigenpairs of Hermitian ``H``.

    ``H`` needs ``apply(f)`` and ``size``.  Pairs come back sorted ascending
    with unit-norm vectors; ``converged`` is judged on the recomputed residual.
    """
    k = cfg.num_eigs
    if k >= H.size:
        raise ValueError(f"num_eigs={k} must be smaller than the operator size {H.size}")
    if cfg.method == "lobpcg":
        return _solve_lobpcg(H, cfg)
    rng = np.random.default_rng(cfg.seed)
    res = thick_restart_lanczos(H.apply, H.size, k, cfg.M, cfg.tol, cfg.max_restarts, rng)
    theta, vectors = res.theta, res.vectors
    matvecs, restarts = res.matvecs, res.restarts
    if cfg.check_missed:
        # Each extra run either confirms the set or replaces its largest member.
        for _ in range(k):
            if len(theta) >= H.size - 1:
                break
            U = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
            U, _r = np.linalg.qr(U.T)
            extra = thick_restart_lanczos(
                H.apply, H.size, 1, cfg.M, cfg.tol, cfg.max_restarts, rng, locked=U.T
            )
            matvecs += extra.matvecs
            restarts += extra.restarts
            gap_tol = cfg.tol * max(1.0, abs(theta[-1]))
            if extra.theta[0] >= theta[-1] - gap_tol:
                break
            log.info("recovered eigenvalue %.15g missed by the first run", extra.theta[0])
            theta = np.append(theta, extra.theta[0])
            vectors = np.vstack([vectors, extra.vectors])
            order = np.argsort(theta, kind="stable")[:k]
            theta, vectors = theta[order], vectors[order]
    pairs = _finalize(H, theta, vectors, cfg.tol)
    if not all(p.converged for p in pairs):
        log.warning("%d of %d eigenpairs did not reach tol=%g", sum(not p.converged for p in pairs), k, cfg.tol)
    return EigenPairSet(pairs, matvecs=matvecs + k, restarts=restarts)


def _diagonal(H) -> np.ndarray:
    K = getattr(H, "kinetic", None)
    if K is not None:
        return np.asarray(K, dtype=float)
    if hasattr(H, "A"):
        return np.real(np.diag(H.A))
    return np.ones(H.size)


def _solve_lobpcg(H, cfg: KrylovConfig) -> EigenPairSet:
    k, n = cfg.num_eigs, H.size
    # Guard vectors keep the k-th pair from stalling against the (k+1)-th.
    bs = min(k + max(2, k // 2), n - 1)
    counter = [0]

    def matmat(X):
        X = np.asarray(X)
        if X.ndim == 1:
            counter[0] += 1
            return H.apply(X)
        counter[0] += X.shape[1]
        return np.stack([H.apply(X[:, j]) for j in range(X.shape[1])], axis=1)

    d = _diagonal(H)
    shift = 1.0 - min(0.0, float(d.min()))
    inv = 1.0 / (d + shift)

    def precondition(X):
        X = np.asarray(X)
        return X * inv if X.ndim == 1 else X * inv[:, None]

    A = LinearOperator((n, n), matvec=matmat, matmat=matmat, dtype=complex)
    M = LinearOperator((n, n), matvec=precondition, matmat=precondition, dtype=complex)
    rng = np.random.default_rng(cfg.seed)
    X = rng.standard_normal((n, bs)) + 1j * rng.standard_normal((n, bs))
    # Tilting the start towards low kinetic modes saves the first few sweeps.
    X *= inv[:, None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        theta, V = lobpcg(A, X, M=M, largest=False, tol=cfg.tol, maxiter=cfg.max_restarts)
    order = np.argsort(theta)[:k]
    pairs = _finalize(H, theta[order], V[:, order].T, cfg.tol)
    if not all(p.converged for p in pairs):
        log.warning("%d of %d eigenpairs did not reach tol=%g", sum(not p.converged for p in pairs), k, cfg.tol)
    return EigenPairSet(pairs, matvecs=counter[0] + k, restarts=0)


class _Negated:
    def __init__(self, H):
        self._H = H
        self.size = H.size

    def apply(self, f):
        return -self._H.apply(f)


def condition_estimate(H, cfg: Optional[KrylovConfig] = None) -> float:
    """``lambda_max / lambda_min`` from extremal Ritz values (about 1% accuracy)."""
    cfg = cfg or KrylovConfig(num_eigs=1)
    rng = np.random.default_rng(cfg.seed)
    M = min(cfg.M, H.size)
    if H.size <= 2:
        lo = thick_restart_lanczos(H.apply, H.size, 1, H.size, 1e-12, 2, rng)
        hi = thick_restart_lanczos(_Negated(H).apply, H.size, 1, H.size, 1e-12, 2, rng)
    else:
        lo = thick_restart_lanczos(H.apply, H.size, 1, M, 1e-6, cfg.max_restarts, rng)
        hi = thick_restart_lanczos(_Negated(H).apply, H.size, 1, M, 1e-6, cfg.max_restarts, rng)
    lam_min = float(lo.theta[0])
    lam_max = float(-hi.theta[0])
    if lam_min <= 0.0:
        raise ValueError(f"operator is not positive definite (lambda_min estimate {lam_min:.3g})")
    return lam_max / lam_min
