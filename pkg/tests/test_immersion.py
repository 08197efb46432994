"""Discrete surface geometry against analytic oracles: induced metric,
quadrature, mean curvature, Kähler angle, Laplacian, snapshot IO."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kflow.ambient import FlatT4, get_model
from kflow.immersion import (
    SNAPSHOT_FORMAT,
    compute_geometry,
    compute_mean_curvature,
    field_deriv,
    frame_rotated_scalars,
    integrate_scalar,
    kahler_angle_cos,
    laplace_beltrami,
    load_grid,
    nabla_J_squared,
    quadrature_weights,
    save_grid,
    sphere_latitude_weights,
)
from kflow.surfaces import build_surface

C2 = get_model("flat-C2")
T4 = get_model("flat-T4")
CP2 = get_model("Fubini-Study-CP2")


def _tilted_plane(theta, nu=16, nv=16):
    """Plane spanned by dx1 and cos(theta) dy1 + sin(theta) dx2:
    constant Kähler angle with cos(alpha) = cos(theta)."""
    return build_surface(
        "plane",
        C2,
        a_dir=(1.0, 0.0, 0.0, 0.0),
        b_dir=(0.0, np.cos(theta), 0.0, np.sin(theta)),
        nu=nu,
        nv=nv,
    )


class TestPlane:
    def test_holomorphic_line_is_minimal_and_holomorphic(self):
        geom = compute_geometry(build_surface("plane", C2, nu=16, nv=16))
        assert np.abs(geom.H).max() < 1e-11
        assert np.abs(geom.cos_alpha - 1.0).max() < 1e-12
        assert np.abs(geom.nablaJ_sq).max() < 1e-10

    def test_lagrangian_plane_has_zero_cos_alpha(self):
        geom = compute_geometry(_tilted_plane(np.pi / 2))
        assert np.abs(geom.cos_alpha).max() < 1e-12

    @pytest.mark.parametrize("theta", [0.3, 1.0, 2.2])
    def test_tilted_plane_kahler_angle(self, theta):
        grid = _tilted_plane(theta)
        geom = compute_geometry(grid)
        assert np.abs(geom.cos_alpha - np.cos(theta)).max() < 1e-11
        assert abs(kahler_angle_cos(grid, 3, 5, geom) - np.cos(theta)) < 1e-11

    def test_area_is_extent_product(self):
        grid = build_surface("plane", C2, extent=(1.5, 0.8), nu=16, nv=16)
        area = integrate_scalar(grid, np.ones((16, 16)))
        assert abs(area - 1.5 * 0.8) < 1e-12

    def test_induced_metric_of_unit_spans(self):
        geom = compute_geometry(build_surface("plane", C2, nu=16, nv=16))
        du = 2 * np.pi / 16
        oracle = np.array([[1.0, 0.0], [0.0, 1.0]]) * (1 / (2 * np.pi)) ** 2
        assert np.abs(geom.g - oracle).max() < 1e-13
        assert np.abs(geom.sqrtg - (1 / (2 * np.pi)) ** 2).max() < 1e-13
        del du


class TestRoundSphere:
    grid = build_surface("round-sphere", C2, radius=0.7, nu=64, nv=32)
    geom = compute_geometry(grid)

    def test_area(self):
        area = integrate_scalar(self.grid, np.ones((64, 32)), self.geom)
        assert abs(area - 4 * np.pi * 0.7**2) / (4 * np.pi * 0.7**2) < 1e-7

    def test_mean_curvature_magnitude(self):
        # |H| = 2/R for the round sphere
        assert np.abs(np.sqrt(self.geom.H_norm_sq) - 2 / 0.7).max() < 1e-5

    def test_mean_curvature_points_inward(self):
        center = self.grid.coords - np.array([0, 0, 0, 0])
        inward = -center / 0.7
        Hhat = self.geom.H / np.sqrt(self.geom.H_norm_sq)[..., None]
        assert np.abs(Hhat - inward).max() < 1e-5

    def test_second_fundamental_norm(self):
        # umbilic: |A|^2 = 2/R^2
        assert np.abs(self.geom.A_sq - 2 / 0.7**2).max() < 1e-4

    def test_fast_path_matches_full_geometry(self):
        H, info = compute_mean_curvature(self.grid)
        assert np.abs(H - self.geom.H).max() < 1e-12
        assert np.abs(info["sqrtg"] - self.geom.sqrtg).max() < 1e-12
        assert np.abs(info["H_norm_sq"] - self.geom.H_norm_sq).max() < 1e-12

    def test_latitude_weights_integrate_sin(self):
        # weights multiply nodal f*sqrt(g); on the unit sphere sqrt(g) = sin v,
        # so sum(sin(v) * w) must be the exact integral of sin over [0, pi]
        for nv in (16, 32, 48):
            v = (np.arange(nv) + 0.5) * np.pi / nv
            w = sphere_latitude_weights(nv)
            assert abs(np.sin(v) @ w - 2.0) < 1e-10

    def test_quadrature_weights_sum_to_area(self):
        w = quadrature_weights(self.grid, self.geom)
        assert w.shape == (64, 32)
        assert abs(w.sum() - 4 * np.pi * 0.7**2) / (4 * np.pi * 0.7**2) < 1e-7


class TestHolomorphicSphereCP2:
    grid = build_surface("cp1", CP2, nu=64, nv=32)
    geom = compute_geometry(grid)

    def test_holomorphic_and_minimal(self):
        assert np.abs(self.geom.cos_alpha - 1.0).max() < 1e-9
        assert np.sqrt(self.geom.H_norm_sq).max() < 1e-4
        assert self.geom.nablaJ_sq.max() < 1e-7

    def test_area_is_pi(self):
        # degree-1 curve under the potential log(1 + |z|^2): area pi
        area = integrate_scalar(self.grid, np.ones((64, 32)), self.geom)
        assert abs(area - np.pi) / np.pi < 1e-6

    def test_grid_uses_multiple_charts(self):
        assert len(np.unique(self.grid.chart_ids)) > 1


def test_curvature_pinching_inequality_perturbed_sphere():
    """|nabla J|^2 >= |H|^2 / 2 pointwise on a symplectic surface."""
    grid = build_surface("perturbed-cp1", CP2, delta=0.08, nu=48, nv=24)
    geom = compute_geometry(grid)
    assert geom.cos_alpha.min() > 0
    assert (geom.nablaJ_sq - 0.5 * geom.H_norm_sq).min() > -1e-10


def test_nabla_J_squared_four_terms():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(5, 2, 2, 2))
    h = 0.5 * (h + np.swapaxes(h, -1, -2))  # symmetric in (i, j)
    want = (
        (h[:, 1, 0, 0] + h[:, 0, 0, 1]) ** 2
        + (h[:, 1, 1, 0] + h[:, 0, 1, 1]) ** 2
        + (h[:, 1, 0, 1] - h[:, 0, 0, 0]) ** 2
        + (h[:, 1, 1, 1] - h[:, 0, 1, 0]) ** 2
    )
    assert np.allclose(nabla_J_squared(h), want)


def test_laplace_beltrami_flat_torus_eigenfunctions():
    grid = build_surface("torus-graph", T4, amplitude=0.0, nu=64, nv=64)
    geom = compute_geometry(grid)
    uu = np.arange(64)[:, None] * (2 * np.pi / 64) * np.ones((1, 64))
    vv = np.ones((64, 1)) * np.arange(64)[None, :] * (2 * np.pi / 64)
    f = np.sin(2 * uu) + np.cos(3 * vv)
    lap = laplace_beltrami(grid, f, geom)
    oracle = -4 * np.sin(2 * uu) - 9 * np.cos(3 * vv)
    assert np.abs(lap - oracle).max() < 2e-4


def test_field_deriv_is_high_order():
    errs = []
    for n in (32, 64):
        grid = build_surface("torus-graph", T4, amplitude=0.0, nu=n, nv=n)
        u = np.arange(n)[:, None] * (2 * np.pi / n) * np.ones((1, n))
        d = field_deriv(grid, np.sin(u), axis=0)
        errs.append(np.abs(d - np.cos(u)).max())
    order = np.log2(errs[0] / errs[1])
    assert order > 5.5  # 7-point interior stencils


def test_sphere_scalar_derivative_crosses_poles():
    """v-derivative of a smooth zonal function stays accurate at the
    staggered rows nearest the poles."""
    grid = build_surface("round-sphere", C2, nu=64, nv=32)
    vv = (np.arange(32)[None, :] + 0.5) * (np.pi / 32) * np.ones((64, 1))
    d = field_deriv(grid, np.cos(vv), axis=1, pole_parity=1)
    assert np.abs(d + np.sin(vv)).max() < 1e-6


def test_frame_rotation_leaves_scalars_invariant():
    grid = build_surface("perturbed-cp1", CP2, delta=0.05, nu=32, nv=16)
    geom = compute_geometry(grid)
    rng = np.random.default_rng(7)
    for _ in range(5):
        rot = frame_rotated_scalars(geom, rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
        for key in ("H_norm_sq", "cos_alpha", "nablaJ_sq", "A_sq"):
            assert np.abs(rot[key] - getattr(geom, key)).max() < 1e-10


def test_adapted_frame_is_orthonormal():
    grid = build_surface("perturbed-cp1", CP2, delta=0.05, nu=32, nv=16)
    geom = compute_geometry(grid)
    G = geom.ambient_metric
    gram = np.einsum("...ia,...ab,...jb->...ij", geom.frame, G, geom.frame)
    assert np.abs(gram - np.eye(4)).max() < 1e-10


def test_snapshot_roundtrip(tmp_path):
    grid = build_surface("perturbed-cp1", CP2, delta=0.03, nu=16, nv=8)
    path = tmp_path / "snap.json"
    save_grid(path, grid, t=0.625)
    grid2, t = load_grid(path, model=CP2)
    assert t == 0.625
    assert grid2.topology == grid.topology
    assert np.array_equal(grid2.chart_ids, grid.chart_ids)
    assert np.abs(grid2.coords - grid.coords).max() == 0.0
    import json

    assert json.loads(path.read_text())["format"] == SNAPSHOT_FORMAT


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_integrate_scalar_is_linear(a, b):
    grid = build_surface("round-sphere", C2, nu=16, nv=8)
    geom = compute_geometry(grid)
    rng = np.random.default_rng(0)
    f = rng.normal(size=(16, 8))
    g = rng.normal(size=(16, 8))
    lhs = integrate_scalar(grid, a * f + b * g, geom)
    rhs = a * integrate_scalar(grid, f, geom) + b * integrate_scalar(grid, g, geom)
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, np.pi - 0.05))
def test_tilted_plane_angle_property(theta):
    geom = compute_geometry(_tilted_plane(theta, nu=8, nv=8))
    assert np.abs(geom.cos_alpha - np.cos(theta)).max() < 1e-10
