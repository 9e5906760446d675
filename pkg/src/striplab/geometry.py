"""Strip geometry: curvature profiles, the transverse metric factor and its certificates.

The metric of the strip is diagonal with a single nontrivial coefficient
``f(x1, x2)`` obtained per longitudinal column by integrating the transverse
initial value problem  f'' + K f = 0,  f(x1, 0) = 1,  f'(x1, 0) = 0,
where ``K`` is the Gauss curvature expressed in strip coordinates.
Every certified field comes with per-column two-sided Taylor envelopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    CurvatureDomainError,
    EnvelopeViolation,
    GeometryInvalid,
    NonPositiveMetric,
)

__all__ = [
    "CurvatureProfile",
    "StripGeometry",
    "MetricField",
    "zero_profile",
    "gaussian_bump",
    "constant_on_box",
    "ruled_profile",
    "tabulated_profile",
    "smooth_cutoff",
    "check_compatible",
    "solve_jacobi",
    "taylor_envelope",
    "ruled_strip",
    "effective_potential",
    "jacobi_columns",
    "metric_table",
]


def smooth_cutoff(r: np.ndarray, r_full: float, r_zero: float) -> np.ndarray:
    """C-infinity plateau cutoff: 1 for |r| <= r_full, exactly 0 for |r| >= r_zero."""
    r = np.abs(np.asarray(r, dtype=float))
    if not r_zero > r_full >= 0.0:
        raise ValueError("need 0 <= r_full < r_zero")
    s = np.clip((r - r_full) / (r_zero - r_full), 0.0, 1.0)

    def _g(u):
        out = np.zeros_like(u)
        pos = u > 0.0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    num = _g(1.0 - s)
    den = num + _g(s)
    return num / den


@dataclass(eq=False)
class CurvatureProfile:
    """Evaluable Gauss curvature with declared support radius and bounds.

    ``evaluate`` must vanish identically for |x1| > support_radius and stay
    below ``sup_norm`` in absolute value; ``axis_infimum`` is the tabulated
    small-width limit of the column-wise essential infimum, used by the
    thin-strip bounds.
    """

    kind: str
    support_radius: float
    sup_norm: float
    params: dict = field(default_factory=dict)
    _k_eval: Callable = None
    _axis_inf: Callable = None
    _col_sup: Callable = None
    theta_dot: Callable = None

    def evaluate(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return self._k_eval(x1, x2)

    def axis_infimum(self, x1):
        return self._axis_inf(np.asarray(x1, float))

    def column_sup(self, x1, a: float):
        """Column-wise sup of |K| over the cross-section (-a, a)."""
        return self._col_sup(np.asarray(x1, float), float(a))


def zero_profile() -> CurvatureProfile:
    return CurvatureProfile(
        kind="zero",
        support_radius=0.0,
        sup_norm=0.0,
        _k_eval=lambda x1, x2: np.zeros_like(x1),
        _axis_inf=lambda x1: np.zeros_like(x1),
        _col_sup=lambda x1, a: np.zeros_like(x1),
    )


def gaussian_bump(
    amplitude: float,
    width: float,
    support_radius: float,
    center: float = 0.0,
    plateau_fraction: float = 0.6,
) -> CurvatureProfile:
    """Gaussian bump in x1 (constant across the width), smoothly cut off.

    The cutoff makes the support exact so that the metric is identically 1
    beyond ``support_radius``, not just close to it.
    """
    if support_radius <= 0 or width <= 0:
        raise ValueError("width and support_radius must be positive")
    r_full = plateau_fraction * support_radius

    def shape(x1):
        g = amplitude * np.exp(-((x1 - center) ** 2) / (2.0 * width**2))
        return g * smooth_cutoff(x1 - center, r_full, support_radius)

    return CurvatureProfile(
        kind="gaussian-bump",
        support_radius=abs(center) + support_radius,
        sup_norm=abs(amplitude),
        params={
            "amplitude": amplitude,
            "width": width,
            "support_radius": support_radius,
            "center": center,
        },
        _k_eval=lambda x1, x2: shape(x1) * np.ones_like(x2),
        _axis_inf=lambda x1: shape(x1),
        _col_sup=lambda x1, a: np.abs(shape(x1)),
    )


def constant_on_box(value: float, half_length: float) -> CurvatureProfile:
    """Constant curvature inside |x1| <= half_length, zero outside.

    ``half_length = inf`` gives the constant-everywhere test profile whose
    metric has the cos/cosh closed forms.
    """

    def shape(x1):
        if math.isinf(half_length):
            return np.full_like(x1, value)
        return np.where(np.abs(x1) <= half_length, value, 0.0)

    return CurvatureProfile(
        kind="constant-on-box",
        support_radius=half_length,
        sup_norm=abs(value),
        params={"value": value, "half_length": half_length},
        _k_eval=lambda x1, x2: shape(x1) * np.ones_like(x2),
        _axis_inf=lambda x1: shape(x1),
        _col_sup=lambda x1, a: np.abs(shape(x1)),
    )


def ruled_profile(
    theta_dot_max: float,
    support_radius: float,
    plateau_fraction: float = 0.5,
) -> CurvatureProfile:
    """Rotation-rate profile of a ruled strip: a C-infinity compactly supported
    plateau bump theta_dot, with K = -theta_dot^2 / f^4 derived from it."""
    if support_radius <= 0:
        raise ValueError("support_radius must be positive")
    r_full = plateau_fraction * support_radius

    def theta_dot(x1):
        return theta_dot_max * smooth_cutoff(x1, r_full, support_radius)

    def k_eval(x1, x2):
        td2 = theta_dot(x1) ** 2
        f2 = 1.0 + td2 * x2**2
        return -td2 / f2**2

    return CurvatureProfile(
        kind="ruled",
        support_radius=support_radius,
        sup_norm=theta_dot_max**2,
        params={
            "theta_dot_max": theta_dot_max,
            "support_radius": support_radius,
            "plateau_fraction": plateau_fraction,
        },
        _k_eval=k_eval,
        # |K| is maximal on the axis; K(x1, 0) = -theta_dot^2
        _axis_inf=lambda x1: -theta_dot(x1) ** 2,
        _col_sup=lambda x1, a: theta_dot(x1) ** 2,
        theta_dot=theta_dot,
    )


def tabulated_profile(x1: np.ndarray, x2: np.ndarray, K: np.ndarray) -> CurvatureProfile:
    """Custom curvature given on a tensor table, bilinearly interpolated.

    Values are taken to vanish outside the tabulated x1 range.
    """
    from scipy.interpolate import RegularGridInterpolator

    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    K = np.asarray(K, float)
    if K.shape != (x1.size, x2.size):
        raise ValueError("K must have shape (len(x1), len(x2))")
    interp = RegularGridInterpolator(
        (x1, x2), K, method="linear", bounds_error=False, fill_value=0.0
    )

    def k_eval(xa, xb):
        pts = np.stack([xa.ravel(), np.clip(xb.ravel(), x2[0], x2[-1])], axis=-1)
        return interp(pts).reshape(xa.shape)

    def axis_inf(xa):
        j0 = int(np.argmin(np.abs(x2)))
        vals = np.interp(xa, x1, K[:, j0], left=0.0, right=0.0)
        return np.minimum(vals, 0.0)

    def col_sup(xa, a):
        rows = np.abs(x2) <= a + 1e-12
        if not rows.any():
            rows = np.array([int(np.argmin(np.abs(x2)))])
        prof = np.abs(K[:, rows]).max(axis=1)
        return np.interp(xa, x1, prof, left=0.0, right=0.0)

    return CurvatureProfile(
        kind="custom-tabulated",
        support_radius=float(np.abs(x1).max()),
        sup_norm=float(np.abs(K).max()),
        params={"n1": x1.size, "n2": x2.size},
        _k_eval=k_eval,
        _axis_inf=axis_inf,
        _col_sup=col_sup,
    )


@dataclass(frozen=True)
class StripGeometry:
    """Computational strip: half-width ``a``, longitudinal box [-L, L] and
    cell counts ``n1`` (longitudinal) and ``n2`` (transverse)."""

    a: float
    L: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.a <= 0 or self.L <= 0:
            raise GeometryInvalid("a and L must be positive")
        if self.n1 < 4 or self.n2 < 4:
            raise GeometryInvalid("need at least 4 cells per direction")

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n1 + 1)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(-self.a, self.a, self.n2 + 1)


def check_compatible(
    profile: CurvatureProfile, geom: StripGeometry, closed_form: bool = False
) -> None:
    """Enforce the construction invariants tying a profile to a strip.

    The smallness gate sup|K| a^2 < 1/2 guarantees positivity of the
    integrated metric. Closed-form families (ruled strips) are positive by
    construction for every half-width, so they skip that gate and keep only
    the truncation requirement.
    """
    if not closed_form and profile.sup_norm * geom.a**2 >= 0.5:
        raise GeometryInvalid(
            f"sup|K| a^2 = {profile.sup_norm * geom.a ** 2:.4g} >= 1/2; "
            "the strip is too wide for this curvature"
        )
    if math.isfinite(profile.support_radius) and geom.L <= profile.support_radius:
        raise GeometryInvalid(
            f"truncation L = {geom.L} must exceed the support radius "
            f"{profile.support_radius}"
        )


@dataclass(eq=False)
class MetricField:
    """Metric factor and its transverse derivative sampled on the tensor grid,
    together with per-column Taylor envelopes and a column sampler that
    re-evaluates the field at arbitrary coordinates."""

    geom: StripGeometry
    x1: np.ndarray
    x2: np.ndarray
    f: np.ndarray      # (n1+1, n2+1)
    d2f: np.ndarray    # (n1+1, n2+1), transverse derivative of f
    envelope_lower: np.ndarray  # per column
    envelope_upper: np.ndarray
    column_sampler: Callable  # (x1_array, x2_levels) -> (f, d2f)
    flat: bool = False
    k_sup: float = 0.0  # sup-norm bound of the generating curvature

    def sample(self, x1, x2_levels):
        """Evaluate (f, d2f) on the tensor of the given columns and levels."""
        return self.column_sampler(np.asarray(x1, float), np.asarray(x2_levels, float))


def _rk4_sweep(profile, x1, levels, base_step, sign):
    """Integrate f'' = -K f from 0 through the given levels on one side.

    ``levels`` are nonnegative distances from the axis, ascending; ``sign``
    selects the transverse direction. Vectorized across all columns at once.
    Returns (f, d2f) of shape (len(x1), len(levels)).
    """
    m = x1.size
    f = np.ones(m)
    fp = np.zeros(m)
    out_f = np.empty((m, levels.size))
    out_fp = np.empty((m, levels.size))
    pos = 0.0
    for j, lev in enumerate(levels):
        gap = lev - pos
        if gap > 0:
            nsub = max(1, int(math.ceil(gap / base_step - 1e-12)))
            h = sign * gap / nsub
            for _ in range(nsub):
                x2c = sign * pos
                k1f = fp
                k1p = -profile.evaluate(x1, np.full(m, x2c)) * f
                k2f = fp + 0.5 * h * k1p
                k2p = -profile.evaluate(x1, np.full(m, x2c + 0.5 * h)) * (f + 0.5 * h * k1f)
                k3f = fp + 0.5 * h * k2p
                k3p = -profile.evaluate(x1, np.full(m, x2c + 0.5 * h)) * (f + 0.5 * h * k2f)
                k4f = fp + h * k3p
                k4p = -profile.evaluate(x1, np.full(m, x2c + h)) * (f + h * k3f)
                f = f + (h / 6.0) * (k1f + 2 * k2f + 2 * k3f + k4f)
                fp = fp + (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
                pos += abs(h)
        out_f[:, j] = f
        out_fp[:, j] = fp
    return out_f, out_fp


def jacobi_columns(profile, x1, x2_levels, base_step):
    """Per-column transverse integration of the metric ODE, landing exactly
    on the requested levels. Fourth-order fixed-step scheme."""
    x1 = np.asarray(x1, float)
    x2_levels = np.asarray(x2_levels, float)
    f = np.empty((x1.size, x2_levels.size))
    d2f = np.empty_like(f)
    neg = x2_levels < 0
    pos = ~neg
    if pos.any():
        lv = x2_levels[pos]
        order = np.argsort(lv)
        ff, fp = _rk4_sweep(profile, x1, lv[order], base_step, +1.0)
        inv = np.argsort(order)
        f[:, pos] = ff[:, inv]
        d2f[:, pos] = fp[:, inv]
    if neg.any():
        lv = -x2_levels[neg]
        order = np.argsort(lv)
        ff, fp = _rk4_sweep(profile, x1, lv[order], base_step, -1.0)
        inv = np.argsort(order)
        f[:, neg] = ff[:, inv]
        d2f[:, neg] = fp[:, inv]
    return f, d2f


def taylor_envelope(profile: CurvatureProfile, a: float, x1=None):
    """Two-sided per-column bounds 1 -/+ Kbar a^2 / (1 - Kbar a^2).

    ``x1`` defaults to nothing useful, so callers normally pass the column
    coordinates they care about.
    """
    x1 = np.asarray(x1, float)
    kbar = profile.column_sup(x1, a)
    q = kbar * a**2
    if np.any(q >= 1.0):
        raise CurvatureDomainError(
            "column curvature bound times a^2 reaches 1; envelope undefined"
        )
    half = q / (1.0 - q)
    return 1.0 - half, 1.0 + half


def solve_jacobi(
    profile: CurvatureProfile,
    geom: StripGeometry,
    oversample: int = 4,
) -> MetricField:
    """Integrate the metric ODE on every grid column and certify the result.

    Integration runs from the axis outward in both directions with a fixed
    RK4 step at ``oversample`` times the transverse grid resolution; the
    derivative is taken from the integrator state rather than re-differenced.
    """
    check_compatible(profile, geom)
    x1 = geom.x1
    x2 = geom.x2
    base_step = geom.a / (geom.n2 * max(4, oversample))
    f, d2f = jacobi_columns(profile, x1, x2, base_step)

    lower, upper = taylor_envelope(profile, geom.a, x1)
    slack = 10.0 * base_step**2 * max(profile.sup_norm, 1.0)
    if np.any(f <= 0.0):
        raise NonPositiveMetric("metric factor non-positive; a^2 restriction violated")
    if np.any(f < lower[:, None] - slack) or np.any(f > upper[:, None] + slack):
        raise EnvelopeViolation("metric sample outside its Taylor envelope")

    def sampler(cols, levels):
        return jacobi_columns(profile, cols, levels, base_step)

    return MetricField(
        geom=geom,
        x1=x1,
        x2=x2,
        f=f,
        d2f=d2f,
        envelope_lower=lower,
        envelope_upper=upper,
        column_sampler=sampler,
        flat=(profile.sup_norm == 0.0),
        k_sup=profile.sup_norm,
    )


def ruled_strip(theta_dot, geom: StripGeometry, residual_tol: float = 1e-6):
    """Closed-form metric of a ruled strip, f = sqrt(1 + theta_dot^2 x2^2).

    ``theta_dot`` is either a ready-made ruled CurvatureProfile or a callable
    rotation rate; no ODE integration is involved. The sampled field is
    checked against the metric ODE by finite differences.
    Returns the metric together with the induced curvature profile.
    """
    if isinstance(theta_dot, CurvatureProfile):
        if theta_dot.kind != "ruled":
            raise ValueError("profile passed to ruled_strip must be of ruled kind")
        profile = theta_dot
        td = profile.theta_dot
    else:
        td = theta_dot
        td_max = float(np.max(np.abs(td(np.linspace(-geom.L, geom.L, 4097)))))
        profile = CurvatureProfile(
            kind="ruled",
            support_radius=geom.L,
            sup_norm=td_max**2,
            params={"theta_dot_max": td_max},
            _k_eval=lambda x1, x2: -td(x1) ** 2 / (1.0 + td(x1) ** 2 * x2**2) ** 2,
            _axis_inf=lambda x1: -td(x1) ** 2,
            _col_sup=lambda x1, a: td(x1) ** 2,
            theta_dot=td,
        )
    check_compatible(profile, geom, closed_form=True)

    def closed_form(cols, levels):
        td2 = td(np.asarray(cols, float))[:, None] ** 2
        xx = np.asarray(levels, float)[None, :] ** 2
        f = np.sqrt(1.0 + td2 * xx)
        d2f = td2 * np.asarray(levels, float)[None, :] / f
        return f, d2f

    x1, x2 = geom.x1, geom.x2
    f, d2f = closed_form(x1, x2)
    K = profile.evaluate(x1[:, None], x2[None, :])

    # residual of the metric ODE on the samples, interior transverse nodes
    h = x2[1] - x2[0]
    resid = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / h**2 + K[:, 1:-1] * f[:, 1:-1]
    # second-order differencing: tolerance scales with h^2 of the 4th derivative
    scale = max(1.0, profile.sup_norm**2) * h**2
    if np.max(np.abs(resid)) > max(residual_tol, 10.0 * scale):
        raise EnvelopeViolation("ruled closed form violates the metric ODE residual")

    # exact closed-form column envelope (sharper than the generic bound and
    # valid for every half-width)
    td_cols = td(x1)
    lower = np.ones_like(x1)
    upper = np.sqrt(1.0 + td_cols**2 * geom.a**2)
    metric = MetricField(
        geom=geom,
        x1=x1,
        x2=x2,
        f=f,
        d2f=d2f,
        envelope_lower=lower,
        envelope_upper=upper,
        column_sampler=closed_form,
        flat=(profile.sup_norm == 0.0),
        k_sup=profile.sup_norm,
    )
    return metric, profile


def effective_potential(metric: MetricField, profile: CurvatureProfile) -> np.ndarray:
    """Pointwise effective transverse potential -K/2 - (d2f/f)^2 / 4 on the grid.

    This is the potential produced by the ground-state substitution
    phi = f^(-1/2) psi in the weighted transverse quotient; for ruled strips
    it reduces to theta'^2 (2 - theta'^2 x2^2) / (4 f^4).
    """
    K = profile.evaluate(metric.x1[:, None], metric.x2[None, :])
    return -0.5 * K - 0.25 * (metric.d2f / metric.f) ** 2


def metric_table(metric: MetricField, profile: CurvatureProfile) -> np.ndarray:
    """Inspection table with columns (x1, x2, f, d2f, K, V), row-major in x1."""
    K = profile.evaluate(metric.x1[:, None], metric.x2[None, :])
    V = effective_potential(metric, profile)
    X1, X2 = np.meshgrid(metric.x1, metric.x2, indexing="ij")
    return np.column_stack(
        [X1.ravel(), X2.ravel(), metric.f.ravel(), metric.d2f.ravel(), K.ravel(), V.ravel()]
    )
