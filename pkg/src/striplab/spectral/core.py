"""Element assembly engine for weighted quadratic forms on tensor grids.

Everything is built from piecewise-(bi)linear elements with 3-point Gauss
quadrature per direction, so stiffness and mass matrices are exactly
symmetric and flat-metric assemblies factorize exactly into tensor products.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import SingularMass

__all__ = [
    "WeightedGrid",
    "OperatorPair",
    "EigenResult",
    "gauss_points_1d",
    "assemble_1d",
    "assemble_2d",
    "make_grid",
]

# 3-point Gauss rule on the reference cell [0, 1]
_GP = 0.5 + np.array([-0.5, 0.0, 0.5]) * np.sqrt(3.0 / 5.0)
_GW = np.array([5.0, 8.0, 5.0]) / 18.0


def gauss_points_1d(nodes: np.ndarray) -> np.ndarray:
    """Physical Gauss coordinates for every cell, shape (n_cells, 3)."""
    nodes = np.asarray(nodes, float)
    h = np.diff(nodes)
    return nodes[:-1, None] + h[:, None] * _GP[None, :]


def _direction_tensors(h: float):
    """Per-direction factor matrices (3, 2, 2) for each term kind.

    The quadrature weight and the cell length are folded into the value
    factors so a 2D term is just the product of its two direction factors.
    """
    nval = np.stack([1.0 - _GP, _GP], axis=1)          # (3, 2)
    nder = np.stack([-np.ones(3), np.ones(3)], axis=1) / h
    ww = _GW * h
    val_val = np.einsum("g,gi,gj->gij", ww, nval, nval)
    der_der = np.einsum("g,gi,gj->gij", ww, nder, nder)
    val_der = np.einsum("g,gi,gj->gij", ww, nval, nder)
    sym = 0.5 * (val_der + val_der.transpose(0, 2, 1))
    return {"v": val_val, "d": der_der, "s": sym}


_KIND_FACTORS = {
    # (x1-direction factor, x2-direction factor)
    "mass": ("v", "v"),
    "d1d1": ("d", "v"),
    "d2d2": ("v", "d"),
    "d1sym": ("s", "v"),
}

_KIND_FACTORS_1D = {"mass": "v", "dd": "d", "dsym": "s"}


def _uniform_spacing(nodes: np.ndarray) -> float:
    h = np.diff(nodes)
    if not np.allclose(h, h[0], rtol=1e-12, atol=0.0):
        raise ValueError("assembly requires uniform grids")
    return float(h[0])


def assemble_1d(nodes: np.ndarray, terms) -> sp.csr_matrix:
    """Assemble sum of 1D terms; each term is (kind, coeff) with coeff of
    shape (n_cells, 3) holding the coefficient at the Gauss points."""
    nodes = np.asarray(nodes, float)
    n_cells = nodes.size - 1
    h = _uniform_spacing(nodes)
    fac = _direction_tensors(h)
    local = np.zeros((n_cells, 2, 2))
    for kind, coeff in terms:
        local += np.einsum("ea,aij->eij", coeff, fac[_KIND_FACTORS_1D[kind]])
    e = np.arange(n_cells)
    rows = (e[:, None, None] + np.array([0, 1])[None, :, None]) * np.ones((1, 1, 2), int)
    cols = (e[:, None, None] + np.array([0, 1])[None, None, :]) * np.ones((1, 2, 1), int)
    mat = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(nodes.size, nodes.size),
    )
    return mat.tocsr()


def assemble_2d(x1: np.ndarray, x2: np.ndarray, terms) -> sp.csr_matrix:
    """Assemble sum of bilinear-element terms on the tensor grid x1 (x) x2.

    Each term is (kind, coeff) with coeff shaped (n1_cells, n2_cells, 3, 3)
    holding the coefficient at the tensor Gauss points of every cell.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    n1, n2 = x1.size - 1, x2.size - 1
    f1 = _direction_tensors(_uniform_spacing(x1))
    f2 = _direction_tensors(_uniform_spacing(x2))
    local = np.zeros((n1 * n2, 4, 4))
    for kind, coeff in terms:
        k1, k2 = _KIND_FACTORS[kind]
        contrib = np.einsum(
            "eab,aij,bkl->eikjl",
            coeff.reshape(n1 * n2, 3, 3),
            f1[k1],
            f2[k2],
        )
        local += contrib.reshape(n1 * n2, 4, 4)

    e1, e2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    base = (e1 * (n2 + 1) + e2).ravel()  # node (e1, e2)
    offsets = np.array([0, 1, n2 + 1, n2 + 2])  # (di, dj) = (0,0),(0,1),(1,0),(1,1)
    glob = base[:, None] + offsets[None, :]
    rows = np.repeat(glob[:, :, None], 4, axis=2)
    cols = np.repeat(glob[:, None, :], 4, axis=1)
    n_nodes = x1.size * x2.size
    mat = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n_nodes, n_nodes)
    )
    return mat.tocsr()


@dataclass(eq=False)
class WeightedGrid:
    """Tensor grid with its Dirichlet mask and the lumped quadrature weights
    of the weighted measure (filled in once a mass matrix is assembled)."""

    x1: np.ndarray
    x2: np.ndarray
    dirichlet: np.ndarray  # bool over all nodes (flattened)
    lumped_weights: np.ndarray = None  # on kept nodes, f dx measure

    @property
    def keep(self) -> np.ndarray:
        return ~self.dirichlet

    @property
    def shape(self):
        return (self.x1.size, self.x2.size)

    def keep_indices(self) -> np.ndarray:
        return np.flatnonzero(self.keep)


def make_grid(x1, x2, dirichlet_x1_ends=True) -> WeightedGrid:
    """Grid with Dirichlet mask on the transverse walls and, optionally, the
    longitudinal truncation ends."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    mask = np.zeros((x1.size, x2.size), dtype=bool)
    mask[:, 0] = True
    mask[:, -1] = True
    if dirichlet_x1_ends:
        mask[0, :] = True
        mask[-1, :] = True
    return WeightedGrid(x1=x1, x2=x2, dirichlet=mask.ravel())


@dataclass(eq=False)
class OperatorPair:
    """Symmetric stiffness/mass pair restricted to unmasked nodes."""

    S: sp.csr_matrix
    M: sp.csr_matrix
    label: str
    grid: WeightedGrid = None
    nodes: np.ndarray = None       # 1D node coordinates when the pair is 1D
    kept: np.ndarray = None        # indices of retained nodes in the full grid
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def check(self) -> None:
        lumped = np.asarray(self.M.sum(axis=1)).ravel()
        if np.any(lumped <= 0.0):
            raise SingularMass(
                f"{np.count_nonzero(lumped <= 0)} retained nodes have "
                "non-positive lumped mass"
            )
        asym_s = abs(self.S - self.S.T).max()
        asym_m = abs(self.M - self.M.T).max()
        scale = max(abs(self.S).max(), 1.0)
        if asym_s > 1e-12 * scale or asym_m > 1e-12:
            raise ValueError("assembled pair lost symmetry")


def restrict(mat: sp.csr_matrix, kept: np.ndarray) -> sp.csr_matrix:
    """Eliminate Dirichlet rows/columns, keeping the listed node indices."""
    return mat[kept][:, kept].tocsr()


@dataclass(eq=False)
class EigenResult:
    """Lowest generalized eigenpairs, mass-normalized and sign-fixed."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray     # (n, k), columns mass-normalized
    residuals: np.ndarray
    iterations: int


def dump_matrix(mat: sp.spmatrix, path) -> None:
    """Coordinate-format text dump (row, col, value) for debugging."""
    coo = mat.tocoo()
    lines = [
        f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
