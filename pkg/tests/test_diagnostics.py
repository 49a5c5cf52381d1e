import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from qpspec.diagnostics import (
    DecayProfile,
    PhysicalSamples,
    box_axes,
    decay_profile,
    eigenfunction_l2_error,
    eigenvalue_error,
    envelope_slope,
    evaluate_on_box,
    evaluate_physical,
    participation_ratio,
    sample_box,
    truncation_curve,
    truncation_error,
)
from qpspec.eigensolver import EigenPair, EigenPairSet
from qpspec.lattice import build_full_index_set, build_reduced_index_set, max_projected_norm, projected_norms

from conftest import P_MOIRE, P_SQRT5, random_complex


def unit(S, k):
    u = np.zeros(S.size, complex)
    u[S.position_of(k)] = 1.0
    return u


class TestTruncationError:
    def test_inside_is_zero(self):
        S = build_full_index_set(2, 8)
        assert truncation_error(unit(S, (0, 0)), S, P_SQRT5, 1.0) == 0.0

    def test_single_outside_term(self):
        S = build_full_index_set(2, 8)
        assert truncation_error(3.0 * unit(S, (2, 1)), S, P_SQRT5, 1.0) == pytest.approx(1.0)

    def test_normalizes(self, rng):
        S = build_full_index_set(2, 8)
        u = random_complex(rng, S.size)
        q = projected_norms(P_SQRT5, S.indices)
        w = np.abs(u) ** 2 / np.sum(np.abs(u) ** 2)
        assert truncation_error(u, S, P_SQRT5, 4.0) == pytest.approx(w[q > 4.0].sum(), rel=1e-12)

    def test_mismatch(self):
        S = build_full_index_set(2, 4)
        with pytest.raises(ValueError):
            truncation_error(np.ones(3), S, P_SQRT5, 1.0)
        with pytest.raises(ValueError):
            truncation_error(np.ones(S.size), S, P_MOIRE, 1.0)

    def test_curve_monotone_and_saturates(self, rng):
        S = build_full_index_set(2, 10)
        u = random_complex(rng, S.size)
        Dmax = max_projected_norm(P_SQRT5, 10)
        Ds = np.linspace(0, Dmax + 1, 40)
        curve = truncation_curve(u, S, P_SQRT5, Ds)
        assert np.all(np.diff(curve) <= 1e-15)
        assert curve[-1] == 0.0
        assert np.allclose(curve, [truncation_error(u, S, P_SQRT5, D) for D in Ds], atol=1e-15)


class TestEvaluate:
    def test_single_mode(self):
        S = build_reduced_index_set(P_MOIRE, 6, 4.0)
        k = (1, 0, 1, -1)
        z = np.array([[0.1, 0.2], [3.0, -1.0]])
        vals = evaluate_physical(unit(S, k), S, P_MOIRE, z).values
        q = P_MOIRE.entries @ np.array(k)
        assert np.allclose(vals, np.exp(1j * z @ q), atol=1e-14)

    def test_origin_and_zero(self, rng):
        S = build_full_index_set(2, 6)
        u = random_complex(rng, S.size)
        assert evaluate_physical(u, S, P_SQRT5, [[0.0]]).values[0] == pytest.approx(u.sum())
        assert np.all(evaluate_physical(np.zeros(S.size), S, P_SQRT5, [[0.3], [1.0]]).values == 0)

    def test_matches_inverse_dft_on_parent_grid(self, rng):
        # With P = identity-like columns, P^T z lands on the parent grid at z = 2 pi m / N.
        from qpspec.lattice import ProjectionMatrix

        P = ProjectionMatrix([[1.0, 0.0], [0.0, 1.0]])
        N = 6
        S = build_full_index_set(2, N)
        u = random_complex(rng, S.size)
        buf = np.zeros((N, N), complex)
        buf.reshape(-1)[S.grid_positions] = u
        grid = scipy.fft.ifftn(buf) * N**2
        m = np.array([[1, 4], [5, 0], [2, 2]])
        z = 2 * np.pi * m / N
        vals = evaluate_physical(u, S, P, z).values
        assert np.allclose(vals, grid[m[:, 0], m[:, 1]], atol=1e-12)

    def test_box_matches_direct(self, rng):
        for P, S in [
            (P_MOIRE, build_reduced_index_set(P_MOIRE, 8, 5.0)),
            (P_SQRT5, build_full_index_set(2, 10)),
        ]:
            u = random_complex(rng, S.size)
            axes = box_axes([0.0] * P.d, [3.0] * P.d, [7] * P.d)
            box = evaluate_on_box(u, S, P, axes)
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            assert np.allclose(box.ravel(), evaluate_physical(u, S, P, pts).values, atol=1e-11)
            sb = sample_box(u, S, P, [0.0] * P.d, [3.0] * P.d, [7] * P.d)
            assert np.allclose(sb.points, pts) and np.allclose(sb.values, box.ravel())

    def test_dimension_checks(self):
        S = build_full_index_set(2, 4)
        with pytest.raises(ValueError):
            evaluate_physical(np.ones(S.size), S, P_SQRT5, [[0.0, 1.0]])
        with pytest.raises(ValueError):
            evaluate_physical(np.ones(3), S, P_SQRT5, [[0.0]])
        with pytest.raises(ValueError):
            PhysicalSamples(np.zeros((2, 1)), np.zeros(3))


def pairs_of(E):
    return EigenPairSet([EigenPair(e, np.ones(1), 0.0, True) for e in E])


class TestEigenvalueError:
    def test_identity_and_shift(self):
        a = pairs_of([1.0, 2.0, 3.0])
        assert eigenvalue_error(a, a, 3) == 0.0
        assert eigenvalue_error(a, pairs_of([1.5, 2.5, 3.5]), 3) == pytest.approx(0.5)

    def test_count(self):
        with pytest.raises(ValueError):
            eigenvalue_error(pairs_of([1.0]), pairs_of([1.0, 2.0]), 2)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_symmetric(self, a, b):
        assert eigenvalue_error(a, b, 3) == eigenvalue_error(b, a, 3)


class TestL2Error:
    pts = np.linspace(0, 1, 8)[:, None]

    def samples(self, v):
        return PhysicalSamples(self.pts, v)

    def test_identical_and_phase(self, rng):
        v = random_complex(rng, 8)
        w = 1 / 8
        assert eigenfunction_l2_error(self.samples(v), self.samples(v), w) <= 1e-15
        assert eigenfunction_l2_error(self.samples(np.exp(0.7j) * v), self.samples(v), w) <= 1e-14

    def test_orthogonal(self):
        a = np.zeros(8)
        b = np.zeros(8)
        a[0], b[1] = 1.0, 1.0
        assert eigenfunction_l2_error(self.samples(a), self.samples(b), 0.25) == pytest.approx(np.sqrt(2))

    def test_mismatched_points(self):
        a = PhysicalSamples(self.pts, np.ones(8))
        b = PhysicalSamples(self.pts + 1, np.ones(8))
        with pytest.raises(ValueError):
            eigenfunction_l2_error(a, b, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
    def test_pseudometric(self, seed, p1, p2):
        r = np.random.default_rng(seed)
        a, b, c = (self.samples(random_complex(r, 8)) for _ in range(3))
        w = 1 / 8
        ab = eigenfunction_l2_error(a, b, w)
        assert ab == pytest.approx(eigenfunction_l2_error(b, a, w), abs=1e-12)
        rot = self.samples(np.exp(1j * p1) * a.values)
        assert ab == pytest.approx(eigenfunction_l2_error(rot, self.samples(np.exp(1j * p2) * b.values), w), abs=1e-12)
        assert ab <= eigenfunction_l2_error(a, c, w) + eigenfunction_l2_error(c, b, w) + 1e-12


class TestDecay:
    def test_delta(self):
        S = build_full_index_set(2, 6)
        prof = decay_profile(unit(S, (0, 0)), S, P_SQRT5)
        assert len(prof) == S.size
        assert prof.qnorm[0] == 0.0 and prof.magnitude[0] == 1.0
        assert np.count_nonzero(prof.magnitude) == 1
        assert np.all(np.diff(prof.qnorm) >= 0)

    def test_slope_of_synthetic_exponential(self):
        q = np.linspace(0, 20, 200)
        prof = DecayProfile(q, np.exp(-1.5 * q))
        assert envelope_slope(prof) == pytest.approx(-1.5, rel=1e-6)


class TestParticipation:
    def test_uniform_and_delta(self):
        m, w = 10, 0.1
        u = np.full(m, 1 / np.sqrt(m * w))
        assert participation_ratio(u, w) == pytest.approx(m * w)
        d = np.zeros(m)
        d[3] = 1 / np.sqrt(w)
        assert participation_ratio(PhysicalSamples(np.zeros((m, 1)), d), w) == pytest.approx(w)

    def test_zero(self):
        with pytest.raises(ValueError):
            participation_ratio(np.zeros(4), 1.0)
