"""Generalized eigenpair extraction by shift-invert iteration."""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from ..errors import NoConvergence, ShiftInsideSpectrum
from .core import EigenResult, OperatorPair

__all__ = ["lowest_eigenpairs"]

_DENSE_CUTOFF = 400


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """First component of magnitude above threshold made positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        v = out[:, j]
        big = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
        if big.size and v[big[0]] < 0:
            out[:, j] = -v
    return out


def lowest_eigenpairs(
    pair: OperatorPair,
    k: int,
    tol: float = 1e-8,
    sigma: float = -1.0,
    maxiter: int = 4000,
) -> EigenResult:
    """k smallest eigenpairs of S v = lambda M v.

    Shift-invert with the shift strictly below the spectrum: repeated sparse
    solves of (S - sigma M) x = b with deflation of converged pairs, seeded
    by a fixed starting vector so results are deterministic. Small problems
    fall back to a dense solve with the same contract.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    S, M = pair.S, pair.M
    n = S.shape[0]
    solves = 0

    if n <= _DENSE_CUTOFF or k >= n - 1:
        vals, vecs = scipy.linalg.eigh(S.toarray(), M.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
        solves = 1
    else:
        rng = np.random.default_rng(0x5EED)
        v0 = rng.standard_normal(n)
        shifted = (S - sigma * M).tocsc()
        try:
            lu = spla.splu(shifted)
        except RuntimeError as exc:
            raise ShiftInsideSpectrum(f"factorization of (S - sigma M) failed: {exc}")

        def op(x):
            nonlocal solves
            solves += 1
            return lu.solve(x)

        op_inv = spla.LinearOperator((n, n), matvec=op, dtype=float)
        try:
            vals, vecs = spla.eigsh(
                S,
                k=k,
                M=M,
                sigma=sigma,
                which="LM",
                v0=v0,
                maxiter=maxiter,
                OPinv=op_inv,
            )
        except spla.ArpackNoConvergence as exc:
            best = None
            if len(exc.eigenvalues):
                v = exc.eigenvectors[:, 0]
                lam = exc.eigenvalues[0]
                best = float(
                    np.linalg.norm(S @ v - lam * (M @ v)) / np.linalg.norm(M @ v)
                )
            raise NoConvergence(
                f"eigensolver did not converge within {maxiter} iterations",
                best_residual=best,
            )

    order = np.argsort(vals)
    vals = np.asarray(vals[order], float)
    vecs = np.asarray(vecs[:, order], float)
    if vals[0] < sigma and n > _DENSE_CUTOFF:
        raise ShiftInsideSpectrum(
            f"shift {sigma} is not below the spectrum (found {vals[0]:.6g})"
        )

    # mass-normalize, fix signs, validate residuals
    residuals = np.empty(k)
    for j in range(k):
        v = vecs[:, j]
        nm = float(np.sqrt(v @ (M @ v)))
        vecs[:, j] = v / nm
    vecs = _fix_signs(vecs)
    for j in range(k):
        v = vecs[:, j]
        residuals[j] = float(
            np.linalg.norm(S @ v - vals[j] * (M @ v)) / np.linalg.norm(M @ v)
        )
    scale = max(abs(vals).max(), 1.0)
    if np.any(residuals > max(tol, 1e-10) * max(scale, 1.0) * 100):
        raise NoConvergence(
            "converged pair exceeds the residual tolerance",
            best_residual=float(residuals.max()),
        )
    return EigenResult(
        eigenvalues=vals, eigenvectors=vecs, residuals=residuals, iterations=solves
    )
