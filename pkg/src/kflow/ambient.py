"""Kähler-Einstein ambient 4-manifolds evaluated in coordinate charts.

Three models are shipped: flat C² (one global chart), the flat 4-torus with
lattice periods, and CP² with the Fubini-Study metric covered by the three
standard affine charts.  All evaluators are vectorized over a leading batch
shape; points carry real chart coordinates ordered (x1, y1, x2, y2) with
z_k = x_k + i y_k.

Sign convention (used by every orientation-sensitive computation in the
package): omega(U, V) := g(JU, V), so that <U, V> = omega(U, JV) holds
identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ChartDomainError, GeodesicEscapeError, LogDivergenceError

# Complex structure of multiplication by i in coordinates (x1, y1, x2, y2);
# column k is J applied to the k-th coordinate basis vector.
J_STANDARD = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)

# Real basis vectors expressed as complex tangent components: C[i, a] is the
# dz^i component of the a-th real coordinate vector.
_C_BASIS = np.array(
    [
        [1.0, 1.0j, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0j],
    ]
)


@dataclass(frozen=True)
class ChartPoint:
    """A point of the ambient manifold in a named coordinate chart."""

    chart_id: int
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))


@dataclass(frozen=True)
class TangentVector:
    """An ambient tangent vector in the coordinate basis of its base chart."""

    base: ChartPoint
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


def to_complex(x):
    x = np.asarray(x)
    return np.stack([x[..., 0] + 1j * x[..., 1], x[..., 2] + 1j * x[..., 3]], axis=-1)


def from_complex(z):
    z = np.asarray(z)
    return np.stack(
        [z[..., 0].real, z[..., 0].imag, z[..., 1].real, z[..., 1].imag], axis=-1
    )


class AmbientModel:
    """Evaluator for one Kähler-Einstein 4-manifold.

    Immutable after construction; all methods are pure functions of
    (model, inputs) and safe for concurrent use.
    """

    name: str
    n_charts: int
    injectivity_radius_bound: float
    is_flat: bool

    # -- chart bookkeeping ------------------------------------------------

    def chart_valid(self, x, chart):
        """Boolean mask: does x lie in chart's declared validity region?"""
        raise NotImplementedError

    def to_chart(self, x, chart_from, chart_to):
        raise NotImplementedError

    def push_forward(self, x, v, chart_from, chart_to):
        """Components of v at x under the transition chart_from -> chart_to."""
        raise NotImplementedError

    def preferred_chart(self, x, chart):
        """Canonical (chart, coords) for each point of a batch."""
        raise NotImplementedError

    def local_coords(self, center_x, center_chart, q_x, q_chart):
        """Coordinates of q expressed in the chart of a nearby center point.

        For the torus the representative closest to the center is chosen, so
        the result varies continuously with q near the center.
        """
        raise NotImplementedError

    # -- tensors ----------------------------------------------------------

    def metric(self, x, chart):
        raise NotImplementedError

    def christoffel(self, x, chart):
        raise NotImplementedError

    def curvature(self, x, chart):
        """(riemann R_{abcd}, ricci, scalar) at each point of the batch."""
        raise NotImplementedError

    def complex_structure(self, x, chart):
        x = np.asarray(x)
        return np.broadcast_to(J_STANDARD, x.shape[:-1] + (4, 4)).copy()

    def symplectic_form(self, x, chart):
        """omega_{ab} = g(J e_a, e_b)."""
        g = self.metric(x, chart)
        jmat = self.complex_structure(x, chart)
        return np.einsum("...ca,...cb->...ab", jmat, g)

    # -- geodesics --------------------------------------------------------

    def exp(self, x, chart, v, s):
        """Batched geodesic exponential: returns (coords, charts)."""
        raise NotImplementedError

    def log(self, p: ChartPoint, q: ChartPoint) -> TangentVector:
        raise NotImplementedError

    def distance(self, x1, chart1, x2, chart2):
        raise NotImplementedError

    # -- misc -------------------------------------------------------------

    @property
    def scalar_curvature(self):
        raise NotImplementedError

    @property
    def einstein_constant(self):
        """Constant lam with Ric = lam * g (scalar curvature / 4 in real
        dimension four).  This, not the full scalar curvature, is the
        constant entering the Kähler-angle evolution equation and the decay
        bounds built on it."""
        return self.scalar_curvature / 4.0

    def random_point(self, rng) -> ChartPoint:
        raise NotImplementedError

    def norm(self, x, chart, v):
        g = self.metric(x, chart)
        return np.sqrt(np.einsum("...a,...ab,...b->...", v, g, v))

    def _require_valid(self, p: ChartPoint):
        if not (0 <= p.chart_id < self.n_charts):
            raise ChartDomainError(f"{self.name}: unknown chart {p.chart_id}")
        if not np.all(self.chart_valid(p.x[None], p.chart_id)):
            raise ChartDomainError(
                f"{self.name}: point {p.x} outside validity region of chart "
                f"{p.chart_id}"
            )


class _FlatModel(AmbientModel):
    """Shared behaviour of the two flat models (identity metric, zero
    connection and curvature, straight geodesics)."""

    is_flat = True

    @property
    def scalar_curvature(self):
        return 0.0

    def metric(self, x, chart):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(4), x.shape[:-1] + (4, 4)).copy()

    def christoffel(self, x, chart):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (4, 4, 4))

    def curvature(self, x, chart):
        x = np.asarray(x)
        lead = x.shape[:-1]
        return (
            np.zeros(lead + (4, 4, 4, 4)),
            np.zeros(lead + (4, 4)),
            np.zeros(lead),
        )

    def push_forward(self, x, v, chart_from, chart_to):
        return np.asarray(v, dtype=float).copy()


class FlatC2(_FlatModel):
    """C² with the Euclidean metric and the standard complex structure."""

    name = "flat-C2"
    n_charts = 1
    injectivity_radius_bound = np.inf

    def chart_valid(self, x, chart):
        x = np.asarray(x)
        return np.isfinite(x).all(axis=-1)

    def to_chart(self, x, chart_from, chart_to):
        return np.asarray(x, dtype=float).copy()

    def preferred_chart(self, x, chart):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1], dtype=int), x.copy()

    def local_coords(self, center_x, center_chart, q_x, q_chart):
        return np.asarray(q_x, dtype=float).copy()

    def exp(self, x, chart, v, s):
        x = np.asarray(x, dtype=float)
        out = x + np.asarray(s)[..., None] * np.asarray(v, dtype=float)
        return out, np.zeros(x.shape[:-1], dtype=int)

    def log(self, p, q):
        self._require_valid(p)
        return TangentVector(base=p, v=q.x - p.x)

    def distance(self, x1, chart1, x2, chart2):
        d = np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float)
        return np.linalg.norm(d, axis=-1)

    def random_point(self, rng) -> ChartPoint:
        return ChartPoint(0, rng.uniform(-2.0, 2.0, size=4))


class FlatT4(_FlatModel):
    """Flat 4-torus R⁴/Λ with a rectangular lattice of periods."""

    name = "flat-T4"
    n_charts = 1

    def __init__(self, periods=(2 * np.pi,) * 4):
        self.periods = np.asarray(periods, dtype=float)
        if np.any(self.periods <= 0):
            raise ValueError("lattice periods must be positive")
        self.injectivity_radius_bound = float(self.periods.min() / 2.0)

    def wrap(self, x):
        return np.mod(np.asarray(x, dtype=float), self.periods)

    def min_image(self, d):
        """Representative of a coordinate difference closest to zero."""
        d = np.asarray(d, dtype=float)
        return d - np.round(d / self.periods) * self.periods

    def chart_valid(self, x, chart):
        x = np.asarray(x)
        return np.isfinite(x).all(axis=-1)

    def to_chart(self, x, chart_from, chart_to):
        return self.wrap(x)

    def preferred_chart(self, x, chart):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1], dtype=int), self.wrap(x)

    def local_coords(self, center_x, center_chart, q_x, q_chart):
        center_x = np.asarray(center_x, dtype=float)
        return center_x + self.min_image(np.asarray(q_x, dtype=float) - center_x)

    def exp(self, x, chart, v, s):
        x = np.asarray(x, dtype=float)
        out = self.wrap(x + np.asarray(s)[..., None] * np.asarray(v, dtype=float))
        return out, np.zeros(x.shape[:-1], dtype=int)

    def log(self, p, q):
        self._require_valid(p)
        return TangentVector(base=p, v=self.min_image(q.x - p.x))

    def distance(self, x1, chart1, x2, chart2):
        d = self.min_image(np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float))
        return np.linalg.norm(d, axis=-1)

    def random_point(self, rng) -> ChartPoint:
        return ChartPoint(0, rng.uniform(0.0, 1.0, size=4) * self.periods)


class FubiniStudyCP2(AmbientModel):
    """CP² with the Fubini-Study metric in the three standard affine charts.

    The metric comes from the Kähler potential log(1 + |z|²) with the real
    normalization g(U, V) = Re(g_{i jbar} u^i conj(v^j)), which makes the
    metric at each chart origin the identity.  The (constant) scalar
    curvature is computed numerically at construction and stored; tests
    compare against this stored value, never a literature constant.
    """

    name = "Fubini-Study-CP2"
    n_charts = 3
    is_flat = False
    transition_radius = 2.0  # max |z_i| triggering a chart change
    validity_radius = 2.5  # hard bound of the declared validity region
    injectivity_radius_bound = 1.5  # conservative; true value is pi/2 here

    _FD_STEP_METRIC = 1e-4  # step for Christoffels (4th-order central)
    _FD_STEP_GAMMA = 1e-3  # step for curvature (differences of Christoffels)

    def chart_valid(self, x, chart):
        z = to_complex(x)
        return np.max(np.abs(z), axis=-1) <= self.validity_radius

    # -- transitions in homogeneous coordinates ---------------------------

    @staticmethod
    def _homogeneous(z, chart):
        """Insert 1 in slot `chart`, filling the others with z in order."""
        lead = z.shape[:-1]
        h = np.empty(lead + (3,), dtype=complex)
        slots = [s for s in range(3) if s != chart]
        h[..., chart] = 1.0
        h[..., slots[0]] = z[..., 0]
        h[..., slots[1]] = z[..., 1]
        return h

    @staticmethod
    def _homogeneous_velocity(u, chart):
        lead = u.shape[:-1]
        dh = np.zeros(lead + (3,), dtype=complex)
        slots = [s for s in range(3) if s != chart]
        dh[..., slots[0]] = u[..., 0]
        dh[..., slots[1]] = u[..., 1]
        return dh

    def to_chart(self, x, chart_from, chart_to):
        if chart_from == chart_to:
            return np.asarray(x, dtype=float).copy()
        h = self._homogeneous(to_complex(x), chart_from)
        slots = [s for s in range(3) if s != chart_to]
        denom = h[..., chart_to]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.stack([h[..., slots[0]] / denom, h[..., slots[1]] / denom], axis=-1)
        return from_complex(z)

    def push_forward(self, x, v, chart_from, chart_to):
        if chart_from == chart_to:
            return np.asarray(v, dtype=float).copy()
        z = to_complex(x)
        u = to_complex(v)
        h = self._homogeneous(z, chart_from)
        dh = self._homogeneous_velocity(u, chart_from)
        slots = [s for s in range(3) if s != chart_to]
        denom = h[..., chart_to]
        ddenom = dh[..., chart_to]
        parts = [
            (dh[..., s] * denom - h[..., s] * ddenom) / denom**2 for s in slots
        ]
        return from_complex(np.stack(parts, axis=-1))

    def preferred_chart(self, x, chart):
        """Chart maximizing the homogeneous pivot, i.e. minimizing max|z|."""
        x = np.asarray(x, dtype=float)
        h = self._homogeneous(to_complex(x), chart)
        best = np.argmax(np.abs(h), axis=-1)
        out_x = np.empty_like(x)
        out_c = best.astype(int)
        for c in range(3):
            mask = best == c
            if np.any(mask):
                out_x[mask] = self.to_chart(x[mask], chart, c)
        return out_c, out_x

    def local_coords(self, center_x, center_chart, q_x, q_chart):
        center_chart = int(center_chart)
        q_x = np.asarray(q_x, dtype=float)
        q_chart = np.broadcast_to(np.asarray(q_chart, dtype=int), q_x.shape[:-1])
        out = np.empty_like(q_x)
        for c in np.unique(q_chart):
            mask = q_chart == c
            out[mask] = self.to_chart(q_x[mask], int(c), center_chart)
        return out

    # -- tensors ----------------------------------------------------------

    def metric(self, x, chart):
        z = to_complex(x)
        zb = np.conj(z)
        denom = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
        delta = np.eye(2)
        g_c = (
            delta * denom[..., None, None]
            - zb[..., :, None] * z[..., None, :]
        ) / denom[..., None, None] ** 2
        # Real block form of Re(g_ij C_i[a] conj(C_j[b])): each complex entry
        # g_kl contributes the 2x2 block [[Re, Im], [-Im, Re]].
        out = np.empty(x.shape[:-1] + (4, 4))
        re = g_c.real
        im = g_c.imag
        for k in range(2):
            for l in range(2):
                out[..., 2 * k, 2 * l] = re[..., k, l]
                out[..., 2 * k, 2 * l + 1] = im[..., k, l]
                out[..., 2 * k + 1, 2 * l] = -im[..., k, l]
                out[..., 2 * k + 1, 2 * l + 1] = re[..., k, l]
        return out

    def christoffel(self, x, chart):
        x = np.asarray(x, dtype=float)
        h = self._FD_STEP_METRIC
        dg = np.empty(x.shape[:-1] + (4, 4, 4))
        for c in range(4):
            e = np.zeros(4)
            e[c] = h
            dg[..., c, :, :] = (
                -self.metric(x + 2 * e, chart)
                + 8 * self.metric(x + e, chart)
                - 8 * self.metric(x - e, chart)
                + self.metric(x - 2 * e, chart)
            ) / (12 * h)
        ginv = np.linalg.inv(self.metric(x, chart))
        return self._christoffel_from_dg(ginv, dg)

    @staticmethod
    def _christoffel_from_dg(ginv, dg):
        # Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij)
        term = (
            np.einsum("...ilj->...lij", dg)
            + np.einsum("...jli->...lij", dg)
            - np.einsum("...lij->...lij", dg)
        )
        return 0.5 * np.einsum("...kl,...lij->...kij", ginv, term)

    def curvature(self, x, chart):
        x = np.asarray(x, dtype=float)
        h = self._FD_STEP_GAMMA
        gamma = self.christoffel(x, chart)
        dgamma = np.empty(x.shape[:-1] + (4, 4, 4, 4))
        for c in range(4):
            e = np.zeros(4)
            e[c] = h
            dgamma[..., c, :, :, :] = (
                -self.christoffel(x + 2 * e, chart)
                + 8 * self.christoffel(x + e, chart)
                - 8 * self.christoffel(x - e, chart)
                + self.christoffel(x - 2 * e, chart)
            ) / (12 * h)
        # R(e_a, e_b) e_c = Rup[..., u, c, a, b] e_u
        rup = (
            np.einsum("...aubc->...ucab", dgamma)
            - np.einsum("...buac->...ucab", dgamma)
            + np.einsum("...uam,...mbc->...ucab", gamma, gamma)
            - np.einsum("...ubm,...mac->...ucab", gamma, gamma)
        )
        g = self.metric(x, chart)
        riemann = np.einsum("...ud,...ucab->...abcd", g, rup)
        ricci = np.einsum("...ucua->...ac", rup)
        scalar = np.einsum("...ac,...ac->...", np.linalg.inv(g), ricci)
        return riemann, ricci, scalar

    @cached_property
    def scalar_curvature(self):
        origin = np.zeros((1, 4))
        _, _, scal = self.curvature(origin, 0)
        return float(scal[0])

    # -- geodesics --------------------------------------------------------

    def _geodesic_rhs(self, x, u, chart):
        gamma = self.christoffel(x, chart)
        acc = -np.einsum("...kij,...i,...j->...k", gamma, u, u)
        return u, acc

    def exp(self, x, chart, v, s):
        """Classical 4th-order one-step integration of the geodesic ODE with
        fixed arc-length substeps of i_M/1000; chart transitions applied
        between substeps."""
        x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
        v = np.atleast_2d(np.asarray(v, dtype=float)).copy()
        charts = np.broadcast_to(np.asarray(chart, dtype=int), x.shape[:-1]).copy()
        s = float(s)
        speed = np.zeros(x.shape[:-1])
        for c in np.unique(charts):
            m = charts == c
            speed[m] = self.norm(x[m], int(c), v[m])
        arclen = float(np.max(speed) * abs(s))
        if arclen == 0.0 or s == 0.0:
            return x, charts
        nsteps = max(1, int(np.ceil(arclen / (self.injectivity_radius_bound / 300))))
        dt = s / nsteps
        for _ in range(nsteps):
            for c in np.unique(charts):
                m = charts == c
                xm, um = x[m], v[m]
                k1x, k1u = self._geodesic_rhs(xm, um, int(c))
                k2x, k2u = self._geodesic_rhs(xm + 0.5 * dt * k1x, um + 0.5 * dt * k1u, int(c))
                k3x, k3u = self._geodesic_rhs(xm + 0.5 * dt * k2x, um + 0.5 * dt * k2u, int(c))
                k4x, k4u = self._geodesic_rhs(xm + dt * k3x, um + dt * k3u, int(c))
                x[m] = xm + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
                v[m] = um + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
            # transition nodes that crossed the chart boundary
            big = np.max(np.abs(to_complex(x)), axis=-1) > self.transition_radius
            if np.any(big):
                for c in np.unique(charts[big]):
                    m = big & (charts == c)
                    newc, newx = self.preferred_chart(x[m], int(c))
                    moved = newc != c
                    if np.any(moved):
                        idx = np.where(m)[0][moved]
                        x_old = x[idx].copy()
                        for tc in np.unique(newc[moved]):
                            sub = idx[newc[moved] == tc]
                            v[sub] = self.push_forward(x_old[newc[moved] == tc], v[sub], int(c), int(tc))
                        x[idx] = newx[moved]
                        charts[idx] = newc[moved]
            if np.any(np.max(np.abs(to_complex(x)), axis=-1) > 50.0):
                raise GeodesicEscapeError(
                    "geodesic integration left every chart validity region"
                )
        return x, charts

    def log(self, p, q, max_iter=30, tol=1e-11):
        """Geodesic shooting: Newton iteration on the initial velocity with
        a batched finite-difference Jacobian of the endpoint map."""
        self._require_valid(p)
        dist = float(self.distance(p.x[None], p.chart_id, q.x[None], q.chart_id)[0])
        if dist >= self.injectivity_radius_bound:
            raise LogDivergenceError(
                f"points at distance {dist:.4f} >= injectivity bound"
            )
        q_coords = self.to_chart(q.x[None], q.chart_id, p.chart_id)[0]
        v = (q_coords - p.x).copy()
        base = np.broadcast_to(p.x, (5, 4))
        res_norm = np.inf
        for _ in range(max_iter):
            fd = 1e-6 * max(1.0, float(np.linalg.norm(v)))
            V = np.concatenate([v[None], v[None] + fd * np.eye(4)])
            ex, ec = self.exp(base, p.chart_id, V, 1.0)
            e_here = self.local_coords(p.x[None], p.chart_id, ex, ec)
            r = q_coords - e_here[0]
            res_norm = float(np.linalg.norm(r))
            if res_norm < tol:
                return TangentVector(base=p, v=v)
            jac = (e_here[1:] - e_here[0]).T / fd  # columns: d exp / d v_a
            try:
                dv = np.linalg.solve(jac, r)
            except np.linalg.LinAlgError:
                dv = r
            # backtrack on the step if the residual would grow
            scale = 1.0
            for _ in range(6):
                ex2, ec2 = self.exp(p.x[None], p.chart_id, (v + scale * dv)[None], 1.0)
                e2 = self.local_coords(p.x[None], p.chart_id, ex2, ec2)[0]
                if np.linalg.norm(q_coords - e2) < res_norm:
                    break
                scale *= 0.5
            v = v + scale * dv
        raise LogDivergenceError(
            f"log map failed to converge; last residual {res_norm:.3e}",
            last_residual=res_norm,
        )

    def distance(self, x1, chart1, x2, chart2):
        h1 = self._homogeneous(to_complex(np.asarray(x1, dtype=float)), int(chart1))
        h2 = self._homogeneous(to_complex(np.asarray(x2, dtype=float)), int(chart2))
        inner = np.abs(np.sum(h1 * np.conj(h2), axis=-1))
        n1 = np.linalg.norm(h1, axis=-1)
        n2 = np.linalg.norm(h2, axis=-1)
        return np.arccos(np.clip(inner / (n1 * n2), -1.0, 1.0))

    def random_point(self, rng) -> ChartPoint:
        chart = int(rng.integers(0, 3))
        x = rng.uniform(-0.8, 0.8, size=4)
        return ChartPoint(chart, x)


_MODELS = {
    "flat-C2": FlatC2,
    "flat-T4": FlatT4,
    "Fubini-Study-CP2": FubiniStudyCP2,
}


def get_model(name, **kwargs) -> AmbientModel:
    if name not in _MODELS:
        raise ValueError(f"unknown ambient model {name!r}; choices: {sorted(_MODELS)}")
    return _MODELS[name](**kwargs)


# -- spec-level scalar operations ----------------------------------------


def metric_at(model: AmbientModel, p: ChartPoint):
    model._require_valid(p)
    return model.metric(p.x[None], p.chart_id)[0]


def christoffel_at(model: AmbientModel, p: ChartPoint):
    model._require_valid(p)
    return model.christoffel(p.x[None], p.chart_id)[0]


def curvature_at(model: AmbientModel, p: ChartPoint):
    model._require_valid(p)
    riemann, ricci, scalar = model.curvature(p.x[None], p.chart_id)
    return riemann[0], ricci[0], float(scalar[0])


def exp_map(model: AmbientModel, p: ChartPoint, v: TangentVector, s: float) -> ChartPoint:
    model._require_valid(p)
    speed = float(model.norm(p.x[None], p.chart_id, v.v[None])[0])
    if speed * abs(s) >= model.injectivity_radius_bound:
        raise ChartDomainError(
            f"|v| s = {speed * abs(s):.4f} exceeds the injectivity radius bound"
        )
    x, c = model.exp(p.x[None], p.chart_id, v.v[None], s)
    return ChartPoint(int(c[0]), x[0])


def log_map(model: AmbientModel, p: ChartPoint, q: ChartPoint) -> TangentVector:
    return model.log(p, q)
