"""Parabolic density of the flow and the regularity monitor built on it.

The density of a surface state at a query (X0, t0, r) is

    Phi = int_Sigma phi(|F|) * (1 / (4 pi tau)) exp(-|F|^2 / (4 tau)) dmu,

with tau = t0 - t, |F| the geodesic distance from X0 (Euclidean in flat
models), and phi a C^2 quintic cutoff supported in the ball of radius 2r.
Closeness of Phi to 1 certifies a curvature bound (epsilon-regularity);
the monitor samples Phi along a run and reports every exceedance of the
configured threshold 1 + eps0.

calibrate_r0 finds the largest kernel radius whose initial density stays
below 1 + eps0/2 over surface nodes and random near-surface points.

density_derivative_check verifies the identity (flat ambients only, fixed
kernel scale tau = r^2)

    dPhi/dt = int grad(phi).H rho
            - int (phi / (8 pi r^4)) exp(-|F|^2/(4 r^2)) <F - X0, H>
            - int phi rho |H|^2

against a central time difference across three consecutive snapshots.
In a curved ambient this identity picks up O(curvature * r^2) corrections,
so the check refuses curved models rather than test a guessed formula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import AmbientModel, ChartPoint
from .errors import CalibrationError, ChartDomainError, CurvedModelError
from .immersion import (
    SurfaceGrid,
    compute_mean_curvature,
    integrate_scalar,
)


@dataclass(frozen=True)
class NormalChart:
    """Geodesic normal coordinates centered at `origin`.

    `basis` rows are four ambient coordinate vectors, orthonormal for the
    ambient metric at the origin; `radius` bounds the validity region."""

    origin: ChartPoint
    basis: np.ndarray
    radius: float


@dataclass(frozen=True)
class DensityQuery:
    x0: ChartPoint
    t0: float
    r: float


def make_query(model: AmbientModel, x0: ChartPoint, t0: float, r: float) -> DensityQuery:
    if not r > 0:
        raise ValueError("kernel radius must be positive")
    if not 2 * r < model.injectivity_radius_bound:
        raise ValueError(
            f"2r = {2 * r:.4f} must stay below the injectivity bound "
            f"{model.injectivity_radius_bound:.4f}"
        )
    return DensityQuery(x0=x0, t0=float(t0), r=float(r))


def build_normal_chart(model: AmbientModel, origin: ChartPoint, radius=None) -> NormalChart:
    """Orthonormalize the coordinate basis at `origin` (Gram-Schmidt in the
    ambient metric) to get normal coordinates."""
    if radius is None:
        radius = min(model.injectivity_radius_bound, 1e6)
    G = model.metric(origin.x[None], origin.chart_id)[0]
    basis = []
    for a in range(4):
        v = np.zeros(4)
        v[a] = 1.0
        for b in basis:
            v = v - (b @ G @ v) * b
        v = v / np.sqrt(v @ G @ v)
        basis.append(v)
    return NormalChart(origin=origin, basis=np.array(basis), radius=float(radius))


def normal_coordinates(model: AmbientModel, chart: NormalChart, q: ChartPoint):
    """Components of log(origin -> q) in the orthonormal basis; their
    Euclidean length equals the geodesic distance."""
    d = float(
        model.distance(chart.origin.x, chart.origin.chart_id, q.x, q.chart_id)
    )
    if d >= chart.radius:
        raise ChartDomainError(
            f"point at distance {d:.4f} outside normal chart of radius {chart.radius:.4f}"
        )
    v = model.log(chart.origin, q).v
    G = model.metric(chart.origin.x[None], chart.origin.chart_id)[0]
    return chart.basis @ (G @ v)


def cutoff(s, r):
    """C^2 cutoff: 1 on [0, r], 0 beyond 2r, quintic smoothstep between.
    The derivative is bounded by (15/8)/r."""
    s = np.asarray(s, dtype=float)
    w = np.clip((s - r) / r, 0.0, 1.0)
    return 1.0 - (10.0 * w**3 - 15.0 * w**4 + 6.0 * w**5)


def _distances_to(model: AmbientModel, grid: SurfaceGrid, x0: ChartPoint):
    """Geodesic distance from x0 to every node (per-chart batched)."""
    out = np.empty(grid.chart_ids.shape)
    for c in np.unique(grid.chart_ids):
        m = grid.chart_ids == c
        out[m] = model.distance(grid.coords[m], int(c), x0.x, x0.chart_id)
    return out


def _distance_matrix(model: AmbientModel, xs, cs, grid: SurfaceGrid):
    """Distances from each center (xs[k], cs[k]) to every grid node,
    shape (len(xs), nu * nv)."""
    coords = grid.coords.reshape(-1, 4)
    charts = grid.chart_ids.reshape(-1)
    out = np.empty((len(xs), coords.shape[0]))
    cs = np.asarray(cs)
    for c1 in np.unique(cs):
        m1 = cs == c1
        for c2 in np.unique(charts):
            m2 = charts == c2
            out[np.ix_(m1, m2)] = model.distance(
                xs[m1][:, None, :], int(c1), coords[m2][None, :, :], int(c2)
            )
    return out


def _kernel_densities(D, w, r):
    """Density values for a block of centers given distances D (Q, N) and
    quadrature weights w (N,), kernel scale tau = r^2."""
    tau = r * r
    K = cutoff(D, r) * np.exp(-(D**2) / (4.0 * tau)) / (4.0 * np.pi * tau)
    return K @ w


def parabolic_density(
    grid: SurfaceGrid, t: float, query: DensityQuery, geom=None
) -> float:
    """Quadrature of phi * backward-heat-kernel over the surface state."""
    tau = query.t0 - t
    if tau <= 0:
        raise ValueError(f"query time t0 = {query.t0} must exceed state time t = {t}")
    d = _distances_to(grid.model, grid, query.x0)
    phi = cutoff(d, query.r)
    rho = np.exp(-(d**2) / (4.0 * tau)) / (4.0 * np.pi * tau)
    return float(integrate_scalar(grid, phi * rho, geom))


def _max_spacing(grid: SurfaceGrid, info):
    det = info["g11"] * info["g22"] - info["g12"] ** 2
    hu = grid.du / np.sqrt(info["g22"] / det)
    hv = grid.dv / np.sqrt(info["g11"] / det)
    return float(max(hu.max(), hv.max()))


def calibrate_r0(
    grid: SurfaceGrid, eps0: float, seed: int = 0, n_offsurface: int = 100
) -> float:
    """Largest kernel radius r0 (bisection) such that the density of the
    initial surface at t0 = r0^2 stays <= 1 + eps0/2 over every surface
    node and `n_offsurface` random ambient points within r0 of the surface.

    Raises CalibrationError when no radius above the resolution floor 4h
    qualifies (grid too coarse for the requested eps0)."""
    model = grid.model
    _, info = compute_mean_curvature(grid)
    floor = 4.0 * _max_spacing(grid, info)
    area = integrate_scalar(grid, np.ones(grid.chart_ids.shape))
    r_max = min(model.injectivity_radius_bound / 2.0, float(np.sqrt(area)))
    if r_max <= floor:
        raise CalibrationError(
            f"admissible radius range ({floor:.4f}, {r_max:.4f}) is empty"
        )
    rng = np.random.default_rng(seed)
    flat_idx = rng.integers(0, grid.nu * grid.nv, size=n_offsurface)
    dirs = rng.normal(size=(n_offsurface, 4))
    fracs = rng.uniform(0.0, 1.0, size=n_offsurface)

    from .immersion import quadrature_weights

    w = quadrature_weights(grid).reshape(-1)
    all_x = grid.coords.reshape(-1, 4)
    all_c = grid.chart_ids.reshape(-1)
    D_nodes = _distance_matrix(model, all_x, all_c, grid)
    base_x = all_x[flat_idx]
    base_c = all_c[flat_idx]
    norms = np.array(
        [model.norm(x, int(c), u) for x, c, u in zip(base_x, base_c, dirs)]
    )
    unit = dirs / norms[:, None]

    def max_density(r):
        best = _kernel_densities(D_nodes, w, r).max()
        # random ambient centers within r of the surface
        off_x = np.empty((n_offsurface, 4))
        off_c = np.empty(n_offsurface, dtype=int)
        for c in np.unique(base_c):
            m = base_c == c
            xs, cs = model.exp(base_x[m], int(c), unit[m] * (fracs[m] * r)[:, None], 1.0)
            off_x[m] = xs
            off_c[m] = cs
        D_off = _distance_matrix(model, off_x, off_c, grid)
        return max(best, _kernel_densities(D_off, w, r).max())

    ok = lambda r: max_density(r) <= 1.0 + eps0 / 2.0
    if not ok(floor):
        raise CalibrationError(
            f"density exceeds 1 + eps0/2 already at the resolution floor {floor:.4f}"
        )
    if ok(r_max):
        return r_max
    lo, hi = floor, r_max
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-3 * floor:
            break
    return lo


@dataclass(frozen=True)
class MonitorRow:
    t0: float
    x0_index: int
    phi: float
    exceeded: bool


@dataclass(frozen=True)
class MonitorReport:
    rows: list[MonitorRow]
    max_phi: float
    n_exceedances: int
    r0: float
    eps0: float


def monitor_regularity(
    snapshots, r0: float, eps0: float, max_queries_per_snapshot: int = 500
) -> MonitorReport:
    """Sample the density along a run's snapshots.

    Each snapshot (grid, t) is probed with kernel scale tau = r0^2 at
    t0 = t + r0^2; centers X0 are the snapshot's own nodes, subsampled to
    at most `max_queries_per_snapshot`."""
    from .immersion import quadrature_weights

    rows = []
    for grid, t in snapshots:
        n = grid.nu * grid.nv
        stride = max(1, int(np.ceil(n / max_queries_per_snapshot)))
        idx = np.arange(0, n, stride)
        t0 = t + r0 * r0
        w = quadrature_weights(grid).reshape(-1)
        xs = grid.coords.reshape(-1, 4)[idx]
        cs = grid.chart_ids.reshape(-1)[idx]
        D = _distance_matrix(grid.model, xs, cs, grid)
        phis = _kernel_densities(D, w, r0)
        for flat, phi in zip(idx, phis):
            rows.append(
                MonitorRow(
                    t0=t0,
                    x0_index=int(flat),
                    phi=float(phi),
                    exceeded=bool(phi > 1.0 + eps0),
                )
            )
    max_phi = max((r.phi for r in rows), default=0.0)
    return MonitorReport(
        rows=rows,
        max_phi=max_phi,
        n_exceedances=sum(r.exceeded for r in rows),
        r0=r0,
        eps0=eps0,
    )


def write_monitor(path, report: MonitorReport):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t0", "x0_index", "phi", "exceeded"])
        for r in report.rows:
            w.writerow([repr(r.t0), r.x0_index, repr(r.phi), int(r.exceeded)])


def density_derivative_check(prev, mid, nxt, query: DensityQuery):
    """Discrepancy between the time difference of Phi (fixed kernel scale
    tau = r^2) and the three-term flow identity, at the middle of three
    consecutive snapshots.  Flat ambient models only."""
    (gp, tp), (gm, tm), (gn, tn) = prev, mid, nxt
    model = gm.model
    if not model.is_flat:
        raise CurvedModelError(
            "the density derivative identity is exact only in flat ambients"
        )
    r = query.r
    tau = r * r

    def phi_static(grid):
        d = _distances_to(model, grid, query.x0)
        f = cutoff(d, r) * np.exp(-(d**2) / (4.0 * tau)) / (4.0 * np.pi * tau)
        return integrate_scalar(grid, f)

    h1, h2 = tm - tp, tn - tm
    dphi_dt = (
        -h2 / (h1 * (h1 + h2)) * phi_static(gp)
        + (h2 - h1) / (h1 * h2) * phi_static(gm)
        + h1 / (h2 * (h1 + h2)) * phi_static(gn)
    )
    H, _ = compute_mean_curvature(gm)
    d = _distances_to(model, gm, query.x0)
    rel = gm.coords - query.x0.x  # position relative to X0 (flat chart)
    if hasattr(model, "min_image"):
        rel = model.min_image(rel)
    FH = np.einsum("...a,...a->...", rel, H)
    H2 = np.einsum("...a,...a->...", H, H)
    rho = np.exp(-(d**2) / (4.0 * tau)) / (4.0 * np.pi * tau)
    phi = cutoff(d, r)
    # grad(phi) . H = phi'(|F|) <F - X0, H> / |F|
    w = np.clip((d - r) / r, 0.0, 1.0)
    dphi = -(30.0 * w**2 - 60.0 * w**3 + 30.0 * w**4) / r
    with np.errstate(invalid="ignore", divide="ignore"):
        grad_term = np.where(d > 0, dphi * FH / np.where(d > 0, d, 1.0), 0.0)
    rhs = (
        integrate_scalar(gm, grad_term * rho)
        - integrate_scalar(
            gm, phi / (8.0 * np.pi * tau**2) * np.exp(-(d**2) / (4.0 * tau)) * FH
        )
        - integrate_scalar(gm, phi * rho * H2)
    )
    return float(dphi_dt - rhs)
