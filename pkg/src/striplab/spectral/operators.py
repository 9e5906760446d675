"""Assembly of the concrete operator pairs studied by the laboratory.

The transverse reference energy entering the self-similar family and all
threshold comparisons is the *discrete* flat transverse ground energy on the
same cross-section grid. Using the analytic value instead would leave an
O(h^2) mismatch that the e^s factor of the self-similar frame amplifies by
three orders of magnitude at the largest frames computed here.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg

from ..errors import GridMisaligned, TruncationWarning
from ..geometry import MetricField
from .core import (
    OperatorPair,
    WeightedGrid,
    assemble_1d,
    assemble_2d,
    gauss_points_1d,
    make_grid,
    restrict,
)

__all__ = [
    "assemble_hk",
    "assemble_potential",
    "transverse_pair",
    "flat_transverse_ground",
    "assemble_Ls",
    "harmonic_oscillator",
    "make_y_grid",
]


def _coeff_grid(metric: MetricField, x1: np.ndarray, x2: np.ndarray):
    """Metric factor at the tensor Gauss points of the given grid.

    Returns (xg1, xg2, F) with F shaped (n1_cells, n2_cells, 3, 3).
    """
    g1 = gauss_points_1d(x1)
    g2 = gauss_points_1d(x2)
    n1, n2 = g1.shape[0], g2.shape[0]
    if metric.flat:
        F = np.ones((n1, n2, 3, 3))
    else:
        f, _ = metric.sample(g1.ravel(), g2.ravel())
        F = f.reshape(n1, 3, n2, 3).transpose(0, 2, 1, 3)
    return g1, g2, F


def assemble_hk(metric: MetricField, grid: WeightedGrid | None = None) -> OperatorPair:
    """Stiffness/mass pair of the weighted Dirichlet form on the strip.

    S[u] = int( f^-1 |d1 u|^2 + f |d2 u|^2 ),  M[u] = int( f |u|^2 ),
    assembled element-wise; Dirichlet rows and columns are eliminated.
    """
    if grid is None:
        grid = make_grid(metric.x1, metric.x2)
    g1, g2, F = _coeff_grid(metric, grid.x1, grid.x2)
    S_full = assemble_2d(grid.x1, grid.x2, [("d1d1", 1.0 / F), ("d2d2", F)])
    M_full = assemble_2d(grid.x1, grid.x2, [("mass", F)])
    kept = grid.keep_indices()
    pair = OperatorPair(
        S=restrict(S_full, kept),
        M=restrict(M_full, kept),
        label="h_K",
        grid=grid,
        kept=kept,
        meta={
            "metric": metric,
            "e1_discrete": flat_transverse_ground(grid.x2),
            "e1_exact": (math.pi / (2.0 * (grid.x2[-1]))) ** 2,
        },
    )
    grid.lumped_weights = np.asarray(pair.M.sum(axis=1)).ravel()
    pair.check()
    return pair


def assemble_potential(metric: MetricField, grid: WeightedGrid, v_nodal: np.ndarray):
    """Mass-weighted potential matrix int( V u v f dx ) for nodal V."""
    g1, g2, F = _coeff_grid(metric, grid.x1, grid.x2)
    v_nodal = np.asarray(v_nodal, float).reshape(grid.shape)
    # bilinear interpolation of the nodal potential onto the Gauss points
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator((grid.x1, grid.x2), v_nodal)
    X1 = np.repeat(g1.ravel(), g2.size)
    X2 = np.tile(g2.ravel(), g1.size)
    V = interp(np.stack([X1, X2], axis=-1)).reshape(
        g1.shape[0], 3, g2.shape[0], 3
    ).transpose(0, 2, 1, 3)
    M_full = assemble_2d(grid.x1, grid.x2, [("mass", V * F)])
    return restrict(M_full, grid.keep_indices())


def _transverse_matrices(x2: np.ndarray, f_col=None):
    """1D transverse pair on the cross-section with optional weight profile
    evaluated at the Gauss points (shape (n_cells, 3))."""
    g2 = gauss_points_1d(x2)
    c = np.ones_like(g2) if f_col is None else f_col
    S = assemble_1d(x2, [("dd", c)])
    M = assemble_1d(x2, [("mass", c)])
    interior = np.arange(1, x2.size - 1)
    return S[interior][:, interior].tocsr(), M[interior][:, interior].tocsr()


def flat_transverse_ground(x2: np.ndarray) -> float:
    """Discrete ground energy of the flat transverse Dirichlet problem."""
    S, M = _transverse_matrices(np.asarray(x2, float))
    vals = scipy.linalg.eigh(
        S.toarray(), M.toarray(), subset_by_index=[0, 0], eigvals_only=True
    )
    return float(vals[0])


def transverse_pair(metric: MetricField, x1: float) -> OperatorPair:
    """Weighted transverse pair of one longitudinal column."""
    x2 = metric.x2
    g2 = gauss_points_1d(x2)
    f, _ = metric.sample(np.array([x1], float), g2.ravel())
    S, M = _transverse_matrices(x2, f.reshape(g2.shape))
    return OperatorPair(
        S=S, M=M, label="transverse", nodes=x2,
        kept=np.arange(1, x2.size - 1),
        meta={"x1": float(x1), "e1_discrete": flat_transverse_ground(x2)},
    )


def make_y_grid(metric: MetricField, half_width: float, n_cells: int) -> WeightedGrid:
    """Frame grid for the self-similar family: longitudinal box
    [-half_width, half_width] times the strip cross-section."""
    y1 = np.linspace(-half_width, half_width, n_cells + 1)
    return make_grid(y1, metric.x2)


def assemble_Ls(
    metric: MetricField,
    s: float,
    grid_y: WeightedGrid,
    requested_range: float = 1.0,
) -> OperatorPair:
    """Self-similar frame operator pair at frame time ``s``.

    Quadratic form, with fs(y) = f(e^{s/2} y1, y2) and the discrete
    transverse reference energy E1h:

        |fs^-1 d1 v|^2_fs + e^s |d2 v|^2_fs - e^s E1h |v|^2_fs
        - 1/4 |v|^2_fs - 1/2 (y1 v, d1 v)_fs
        + 1/16 (y1 v, [2 - fs^-2] y1 v)_fs

    The cross term enters through the symmetric part of its bilinear
    extension, which on real vectors reproduces the quadratic form exactly.
    """
    if s < 0:
        raise ValueError("frame time s must be nonnegative")
    y1, x2 = grid_y.x1, grid_y.x2
    half_width = float(y1[-1])
    if half_width**2 / 16.0 < 10.0 * requested_range:
        warnings.warn(
            "confining term at the box edge is below 10x the requested "
            "eigenvalue range; enlarge the frame box",
            TruncationWarning,
        )
    g1 = gauss_points_1d(y1)
    g2 = gauss_points_1d(x2)
    n1, n2 = g1.shape[0], g2.shape[0]
    if metric.flat:
        FS = np.ones((n1, n2, 3, 3))
    else:
        f, _ = metric.sample(np.exp(0.5 * s) * g1.ravel(), g2.ravel())
        FS = f.reshape(n1, 3, n2, 3).transpose(0, 2, 1, 3)
    Y = g1.reshape(n1, 1, 3, 1)
    es = math.exp(s)
    e1h = flat_transverse_ground(x2)

    terms_S = [
        ("d1d1", 1.0 / FS),
        ("d2d2", es * FS),
        ("mass", (-es * e1h - 0.25) * FS),
        ("d1sym", -0.5 * Y * FS),
        ("mass", (1.0 / 16.0) * Y**2 * (2.0 - FS**-2) * FS),
    ]
    S_full = assemble_2d(y1, x2, terms_S)
    M_full = assemble_2d(y1, x2, [("mass", FS)])
    kept = grid_y.keep_indices()
    pair = OperatorPair(
        S=restrict(S_full, kept),
        M=restrict(M_full, kept),
        label="L_s",
        grid=grid_y,
        kept=kept,
        meta={"s": float(s), "e1_discrete": e1h, "metric": metric},
    )
    grid_y.lumped_weights = np.asarray(pair.M.sum(axis=1)).ravel()
    pair.check()
    return pair


def harmonic_oscillator(dirichlet_at_zero: bool, grid_y1: np.ndarray) -> OperatorPair:
    """1D pair for -d^2/dy^2 + y^2/16 on the given grid, Dirichlet box ends.

    With the flag set, the node at the origin joins the Dirichlet mask,
    which selects the odd spectral branch.
    """
    y = np.asarray(grid_y1, float)
    g = gauss_points_1d(y)
    S = assemble_1d(y, [("dd", np.ones_like(g)), ("mass", g**2 / 16.0)])
    M = assemble_1d(y, [("mass", np.ones_like(g))])
    mask = np.zeros(y.size, dtype=bool)
    mask[0] = mask[-1] = True
    if dirichlet_at_zero:
        h = y[1] - y[0]
        at_zero = np.flatnonzero(np.abs(y) < 1e-9 * h)
        if at_zero.size == 0:
            raise GridMisaligned("no grid node at the origin for the pinned problem")
        mask[at_zero[0]] = True
    kept = np.flatnonzero(~mask)
    return OperatorPair(
        S=S[kept][:, kept].tocsr(),
        M=M[kept][:, kept].tocsr(),
        label="oscillator",
        nodes=y,
        kept=kept,
        meta={"dirichlet_at_zero": bool(dirichlet_at_zero)},
    )
