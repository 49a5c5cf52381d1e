import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpspec.potential import (
    BUILTIN_KINDS,
    SQRT5,
    GridField,
    PotentialSpec,
    canonical_projection,
    parent_value,
    physical_value,
    read_grid_file,
    sample_parent_grid,
    write_grid_file,
)

from conftest import P_MOIRE, P_SQRT5, P_THETA

DIM = {"qp1d_sqrt5": 2, "qp1d_theta": 2, "qp2d_moire": 4}


class TestParentValue:
    def test_examples(self):
        assert parent_value(PotentialSpec("qp2d_moire"), np.zeros(4)) == pytest.approx(0.2, abs=1e-15)
        x = (math.pi / 2, math.pi / 2)
        assert parent_value(PotentialSpec("qp1d_sqrt5"), x) == pytest.approx(1.0, abs=1e-15)
        assert parent_value(PotentialSpec("qp1d_theta"), (0.0, 0.0)) == pytest.approx(0.2, abs=1e-15)

    def test_E0_scales(self):
        spec = PotentialSpec("qp1d_sqrt5", E0=3.0)
        assert parent_value(spec, (0.0, 0.0)) == pytest.approx(0.6)

    def test_sqrt5_coordinate_assignment(self):
        # v(z) = E0/(1+(cos z + cos(sqrt5 z))^2) must come out of V(P^T z).
        spec = PotentialSpec("qp1d_sqrt5")
        z = np.linspace(-7, 7, 41)[:, None]
        expected = 1.0 / (1.0 + (np.cos(z[:, 0]) + np.cos(SQRT5 * z[:, 0])) ** 2)
        assert np.allclose(physical_value(spec, P_SQRT5, z), expected, atol=1e-15)

    def test_moire_physical_form(self):
        spec = PotentialSpec("qp2d_moire")
        z = np.array([[0.3, -1.1], [2.0, 5.5]])
        c, s = np.cos, SQRT5
        expected = 1.0 / ((c(z[:, 0]) * c(z[:, 1]) + c(s * z[:, 0]) * c(s * z[:, 1])) ** 2 + 1.0)
        assert np.allclose(physical_value(spec, P_MOIRE, z), expected, atol=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            PotentialSpec("banana")
        with pytest.raises(ValueError):
            PotentialSpec("qp1d_sqrt5", E0=-1.0)
        with pytest.raises(ValueError):
            parent_value(PotentialSpec("qp2d_moire"), (0.0, 0.0))
        with pytest.raises(ValueError):
            PotentialSpec("grid_file")

    @settings(max_examples=40, deadline=None)
    @given(
        kind=st.sampled_from(BUILTIN_KINDS),
        x=st.lists(st.floats(-50, 50, allow_nan=False), min_size=4, max_size=4),
        axis=st.integers(0, 3),
        E0=st.floats(0, 10, allow_nan=False),
    )
    def test_periodic_and_bounded(self, kind, x, axis, E0):
        spec = PotentialSpec(kind, E0=E0)
        x = np.array(x[: DIM[kind]])
        axis %= x.size
        y = x.copy()
        y[axis] += 2 * np.pi
        v = parent_value(spec, x)
        assert abs(parent_value(spec, y) - v) <= 1e-12
        assert v <= E0 + 1e-15
        assert v >= E0 / 5 - 1e-15

    @settings(max_examples=30, deadline=None)
    @given(z=st.lists(st.floats(-30, 30, allow_nan=False), min_size=2, max_size=2))
    def test_composition_identity(self, z):
        for spec, P in [(PotentialSpec("qp1d_theta"), P_THETA), (PotentialSpec("qp2d_moire"), P_MOIRE)]:
            zz = np.array(z[: P.d])
            assert physical_value(spec, P, zz) == parent_value(spec, zz @ P.entries)


class TestCanonicalProjection:
    def test_built_ins(self):
        assert canonical_projection(PotentialSpec("qp1d_sqrt5")) == P_SQRT5
        assert np.allclose(canonical_projection(PotentialSpec("qp1d_theta", theta=math.pi / 6)).entries, P_THETA.entries)
        assert canonical_projection(PotentialSpec("qp2d_moire")) == P_MOIRE

    @pytest.mark.parametrize("spec", [PotentialSpec("constant", c=1.0), PotentialSpec("grid_file", path="x")])
    def test_no_canonical(self, spec):
        with pytest.raises(ValueError):
            canonical_projection(spec)


class TestSampling:
    def test_constant(self):
        g = sample_parent_grid(PotentialSpec("constant", c=0.7), 5, n=3)
        assert g.values.shape == (5, 5, 5) and np.all(g.values == 0.7)

    def test_constant_needs_dimension(self):
        with pytest.raises(ValueError):
            sample_parent_grid(PotentialSpec("constant", c=1.0), 4)

    def test_moire_origin(self):
        g = sample_parent_grid(PotentialSpec("qp2d_moire"), 4)
        assert g.values[0, 0, 0, 0] == pytest.approx(0.2, abs=1e-15)

    def test_bounds(self):
        g = sample_parent_grid(PotentialSpec("qp1d_sqrt5"), 8)
        assert g.values.min() >= 0.2 - 1e-15 and g.values.max() <= 1.0 + 1e-15

    @pytest.mark.parametrize("kind", BUILTIN_KINDS)
    def test_matches_pointwise(self, kind):
        spec = PotentialSpec(kind, E0=2.0)
        N = 6
        g = sample_parent_grid(spec, N)
        n = DIM[kind]
        axis = 2 * np.pi * np.arange(N) / N
        mesh = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1)
        assert np.allclose(g.values, parent_value(spec, mesh), atol=1e-15)

    def test_offset(self):
        a = sample_parent_grid(PotentialSpec("qp1d_theta"), 8).values
        b = sample_parent_grid(PotentialSpec("qp1d_theta", offset=2.5), 8).values
        assert np.allclose(b - a, 2.5, atol=1e-15)

    def test_budget(self):
        with pytest.raises(MemoryError):
            sample_parent_grid(PotentialSpec("qp2d_moire"), 30, budget=1000)


class TestGridFile:
    def test_round_trip(self, tmp_path):
        N = 6
        g = sample_parent_grid(PotentialSpec("qp1d_sqrt5"), N)
        path = tmp_path / "v.grid"
        write_grid_file(path, g)
        assert path.read_bytes().startswith(b"2 6\n")
        back = read_grid_file(path)
        assert back.n == 2 and back.N == N
        assert np.array_equal(back.values, g.values)
        spec = PotentialSpec("grid_file", path=str(path))
        assert spec.raised_dim == 2
        assert np.array_equal(sample_parent_grid(spec, N).values, g.values)
        # Trigonometric interpolation reproduces the samples at grid points.
        x = np.array([2 * np.pi * 2 / N, 2 * np.pi * 5 / N])
        assert parent_value(spec, x) == pytest.approx(g.values[2, 5], abs=1e-13)

    def test_bad_file(self, tmp_path):
        path = tmp_path / "bad.grid"
        path.write_bytes(b"2 4\n" + b"\0" * 8)
        with pytest.raises(ValueError):
            read_grid_file(path)
        with pytest.raises(ValueError):
            GridField(2, 3, np.zeros(8))
