"""Mean curvature flow time stepping.

Nodes move by dF/dt = H with classical 4th-order Runge-Kutta in chart
coordinates.  The step size is cfl_factor * h_res^2 where h_res is the
resolved grid spacing recomputed from the induced metric every step.

On sphere grids the azimuthal spacing collapses like sin(v) toward the
poles, so a literal min-spacing step size would shrink quadratically in the
resolution for no accuracy gain (the polar rows oversample the surface in
u).  Instead h_res uses the *equatorial* row spacing, and a zonal FFT
filter removes, per latitude row, the azimuthal modes whose explicit-step
amplification factor would exceed the Runge-Kutta stability bound at that
step size.  The filter acts on the velocity field only (never on node
positions), touches only modes that are unresolved at the polar radius, and
is skipped for rows whose nodes span several charts (those sit away from
the poles, inside the stable band).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import DiagnosticsRecord, record
from .errors import ConfigError, DegenerateImmersionError
from .immersion import SurfaceGrid, compute_geometry, compute_mean_curvature, grid_partials

# Largest |z| (real-axis) with |R(z)| <= 1 for classical RK4.
_RK4_REAL_LIMIT = 2.785
# Fraction of the stability budget the zonal filter allows a kept mode.
_FILTER_SAFETY = 0.75
# Symbol of the 7-point second-difference stencil at angle theta per mode.
_D2_SYMBOL = lambda th: (490.0 - 540.0 * np.cos(th) + 54.0 * np.cos(2 * th) - 4.0 * np.cos(3 * th)) / 180.0


@dataclass(frozen=True)
class FlowConfig:
    t_end: float
    cfl_factor: float = 0.2
    snapshot_stride: int = 50
    diagnostics_stride: int = 10
    redistribution: tuple[int, float] | None = None  # (every k steps, strength)
    blowup_threshold: float | None = None  # default: 1e3 / initial length scale
    converged_H_tol: float = 1e-4
    floor: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.cfl_factor <= 0.5:
            raise ConfigError("cfl_factor must lie in (0, 0.5]")
        if self.snapshot_stride < 1 or self.diagnostics_stride < 1:
            raise ConfigError("strides must be >= 1")
        if self.redistribution is not None:
            k, lam = self.redistribution
            if k < 1 or lam < 0:
                raise ConfigError("redistribution needs k >= 1 and strength >= 0")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")


@dataclass
class FlowState:
    grid: SurfaceGrid
    t: float = 0.0
    step_index: int = 0


@dataclass(frozen=True)
class FlowResult:
    records: list[DiagnosticsRecord]
    snapshots: list[tuple[SurfaceGrid, float]]
    stop_reason: str  # reached-t-end | converged | blowup-flag | degenerate-grid
    state: FlowState
    holomorphicity_gap: float | None = None


def velocity_field(grid: SurfaceGrid, floor=1e-6):
    """Mean curvature vector at every node (the pure flow velocity), plus
    induced-metric info for step-size control."""
    return compute_mean_curvature(grid, floor=floor)


def _spacings(grid: SurfaceGrid, info):
    """Per-node effective spacings (h_u, h_v) from the induced metric."""
    det = info["g11"] * info["g22"] - info["g12"] ** 2
    hu = grid.du / np.sqrt(info["g22"] / det)
    hv = grid.dv / np.sqrt(info["g11"] / det)
    return hu, hv


def resolved_spacing(grid: SurfaceGrid, info) -> float:
    """Spacing used for the step size.

    Torus: global minimum spacing.  Sphere: min of the v-spacing and the
    *widest* row's minimum u-spacing (polar rows are handled by the zonal
    filter instead of the step size).
    """
    hu, hv = _spacings(grid, info)
    if grid.topology == "torus":
        return float(min(hu.min(), hv.min()))
    return float(min(hv.min(), hu.min(axis=0).max()))


def _zonal_filter_mask(grid: SurfaceGrid, info, dt: float):
    """Boolean keep-mask (nu//2 + 1, nv) for rfft modes of the velocity
    along u, or None when nothing needs filtering."""
    mask, _ = _zonal_filter(grid, info, dt)
    return mask


def _zonal_filter(grid: SurfaceGrid, info, dt: float):
    """Stability treatment of the stiff azimuthal modes on sphere grids.

    Returns (keep_mask, rate):
    - keep_mask: boolean (nu//2 + 1, nv) rfft-mode mask for the velocity;
      modes whose frozen-row diffusion rate would exceed the explicit RK4
      stability budget at this dt are dropped from the explicit update.
    - rate: the frozen-row diffusion rate estimate for every mode (used by
      the exponential step for the dropped modes), or None with mask None.

    Rows spanning several charts sit in the stable band and are skipped.
    """
    if grid.topology != "sphere":
        return None, None
    nu = grid.nu
    det = info["g11"] * info["g22"] - info["g12"] ** 2
    i11 = info["g22"] / det
    i22 = info["g11"] / det
    a_row = i11.max(axis=0) / grid.du**2            # stiffest u-coefficient
    c_row = i22.max(axis=0) / grid.dv**2 * _D2_SYMBOL(np.pi)
    k = np.arange(nu // 2 + 1)
    budget = _FILTER_SAFETY * _RK4_REAL_LIMIT / dt
    rate = a_row[None, :] * _D2_SYMBOL(k * grid.du)[:, None]
    keep = rate + c_row[None, :] <= budget
    mixed = np.array([len(np.unique(grid.chart_ids[:, j])) > 1 for j in range(grid.nv)])
    keep[:, mixed] = True
    if keep.all():
        return None, None
    return keep, rate


def _apply_mask(vel, mask):
    if mask is None:
        return vel
    vf = np.fft.rfft(vel, axis=0)
    vf *= mask[:, :, None]
    return np.fft.irfft(vf, n=vel.shape[0], axis=0)


def _exponential_mode_step(coords, vel, mask, rate, dt):
    """Exponential-Euler update for the velocity modes dropped by the mask.

    The dropped azimuthal modes are too stiff for the explicit RK4 stage at
    this dt; freezing them would leave any initial polar displacement (and
    its k^2/r^2-amplified curvature) stuck forever.  Instead they advance
    by delta_k += dt * phi1(-rate_k dt) * (H)_k with phi1(z) = (e^z - 1)/z:
    exact for the frozen linear diffusion d(delta_k)/dt = -rate_k delta_k,
    unconditionally stable since the symbol-based rate overestimates the
    true per-mode rate, and sharing the fixed point H = 0 with the flow."""
    if mask is None:
        return
    dropped = ~mask
    z = rate[dropped] * dt
    phi1 = np.where(z > 1e-12, -np.expm1(-z) / np.maximum(z, 1e-300), 1.0)
    vf = np.fft.rfft(vel, axis=0)
    upd = np.zeros_like(vf)
    upd[dropped] = (dt * phi1)[:, None] * vf[dropped]
    coords += np.fft.irfft(upd, n=coords.shape[0], axis=0)


def _reassign_charts(grid: SurfaceGrid):
    """Move nodes whose coordinates grew past the chart transition radius
    to their preferred chart (curved models only)."""
    model = grid.model
    if model.is_flat:
        if grid.topology == "torus" and grid.period_offsets is None and hasattr(model, "wrap"):
            grid.coords[...] = model.wrap(grid.coords)
        return grid
    z_mod = np.hypot(grid.coords[..., 0], grid.coords[..., 1])
    z_mod = np.maximum(z_mod, np.hypot(grid.coords[..., 2], grid.coords[..., 3]))
    if z_mod.max() <= model.transition_radius:
        return grid
    for c in np.unique(grid.chart_ids):
        m = grid.chart_ids == c
        new_c, new_x = model.preferred_chart(grid.coords[m], int(c))
        grid.chart_ids[m] = new_c
        grid.coords[m] = new_x
    return grid


def step(state: FlowState, config: FlowConfig, _vel=None) -> FlowState:
    """One RK4 step of dF/dt = H.  `_vel` optionally reuses an already
    computed (H, info) pair for the first stage."""
    grid = state.grid
    H1, info = _vel if _vel is not None else velocity_field(grid, config.floor)
    h_res = resolved_spacing(grid, info)
    dt = config.cfl_factor * h_res**2
    dt = min(dt, config.t_end - state.t)
    mask, rate = _zonal_filter(grid, info, dt)

    k1 = _apply_mask(H1, mask)

    def stage(displacement):
        g = grid.copy()
        g.coords += displacement
        Hs, _ = velocity_field(g, config.floor)
        return _apply_mask(Hs, mask)

    k2 = stage(0.5 * dt * k1)
    k3 = stage(0.5 * dt * k2)
    k4 = stage(dt * k3)
    new = grid.copy()
    new.coords += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    _exponential_mode_step(new.coords, H1, mask, rate, dt)
    _reassign_charts(new)
    return FlowState(grid=new, t=state.t + dt, step_index=state.step_index + 1)


def redistribute(state: FlowState, strength: float) -> FlowState:
    """Tangential umbrella smoothing of the parametrization.

    Each node moves by `strength` times the tangential projection of the
    4-point neighbor average displacement; the geometric surface is
    unchanged to O(strength * h^2)."""
    if strength == 0.0:
        return state
    grid = state.grid.copy()
    from .immersion import gather_neighbor_coords

    avg = (
        gather_neighbor_coords(grid, 1, 0)
        + gather_neighbor_coords(grid, -1, 0)
        + gather_neighbor_coords(grid, 0, 1)
        + gather_neighbor_coords(grid, 0, -1)
    ) / 4.0
    disp = avg - grid.coords
    Fu, Fv, *_ = grid_partials(grid)
    model = grid.model
    if model.is_flat:
        du_ = np.einsum("...a,...a->...", disp, Fu)
        dv_ = np.einsum("...a,...a->...", disp, Fv)
        g11 = np.einsum("...a,...a->...", Fu, Fu)
        g12 = np.einsum("...a,...a->...", Fu, Fv)
        g22 = np.einsum("...a,...a->...", Fv, Fv)
    else:
        from .immersion import _per_chart

        Gm = _per_chart(model, grid.chart_ids, grid.coords, model.metric)
        GFu = np.einsum("...ab,...b->...a", Gm, Fu)
        GFv = np.einsum("...ab,...b->...a", Gm, Fv)
        du_ = np.einsum("...a,...a->...", disp, GFu)
        dv_ = np.einsum("...a,...a->...", disp, GFv)
        g11 = np.einsum("...a,...a->...", Fu, GFu)
        g12 = np.einsum("...a,...a->...", Fu, GFv)
        g22 = np.einsum("...a,...a->...", Fv, GFv)
    det = g11 * g22 - g12**2
    cu = (g22 * du_ - g12 * dv_) / det
    cv = (g11 * dv_ - g12 * du_) / det
    tangential = cu[..., None] * Fu + cv[..., None] * Fv
    grid.coords += strength * tangential
    return FlowState(grid=grid, t=state.t, step_index=state.step_index)


def run(initial: SurfaceGrid, config: FlowConfig) -> FlowResult:
    """Advance the flow to t_end, emitting a DiagnosticsRecord every
    diagnostics_stride steps and a snapshot every snapshot_stride steps."""
    state = FlowState(grid=initial.copy())
    try:
        geom0 = compute_geometry(state.grid, floor=config.floor)
    except DegenerateImmersionError:
        return FlowResult(
            records=[],
            snapshots=[(state.grid.copy(), state.t)],
            stop_reason="degenerate-grid",
            state=state,
            holomorphicity_gap=None,
        )
    rec = record(state.grid, state.t, geom=geom0)
    records = [rec]
    snapshots = [(state.grid.copy(), state.t)]
    threshold = config.blowup_threshold
    if threshold is None:
        threshold = 1e3 / np.sqrt(rec.area)
    stop = None
    gap = None
    if rec.supA > threshold:
        stop = "blowup-flag"
    while stop is None and state.t < config.t_end - 1e-15:
        try:
            vel = velocity_field(state.grid, config.floor)
        except DegenerateImmersionError:
            stop = "degenerate-grid"
            break
        max_h = float(np.sqrt(vel[1]["H_norm_sq"].max()))
        if max_h < config.converged_H_tol:
            stop = "converged"
            break
        try:
            state = step(state, config, _vel=vel)
        except DegenerateImmersionError:
            stop = "degenerate-grid"
            break
        if config.redistribution is not None:
            k_every, lam = config.redistribution
            if state.step_index % k_every == 0:
                state = redistribute(state, lam)
        at_end = state.t >= config.t_end - 1e-15
        if state.step_index % config.diagnostics_stride == 0 or at_end:
            try:
                geom = compute_geometry(state.grid, floor=config.floor)
            except DegenerateImmersionError:
                stop = "degenerate-grid"
                break
            rec = record(state.grid, state.t, geom=geom, prev=records[-1])
            records.append(rec)
            if not np.isfinite(rec.area):
                stop = "degenerate-grid"
                break
            if rec.supA > threshold:
                stop = "blowup-flag"
                break
        if state.step_index % config.snapshot_stride == 0 or at_end:
            snapshots.append((state.grid.copy(), state.t))
    if stop is None:
        stop = "reached-t-end"
    if stop in ("converged", "reached-t-end"):
        try:
            geom = compute_geometry(state.grid, floor=config.floor)
            if records[-1].t < state.t - 1e-15 or len(records) == 0:
                records.append(record(state.grid, state.t, geom=geom, prev=records[-1]))
            gap = float(np.max(np.abs(1.0 - geom.cos_alpha)))
        except DegenerateImmersionError:
            stop = "degenerate-grid"
    return FlowResult(
        records=records,
        snapshots=snapshots,
        stop_reason=stop,
        state=state,
        holomorphicity_gap=gap,
    )
