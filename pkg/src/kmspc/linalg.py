"""Symmetric eigendecomposition with a deterministic output convention."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError


def _check_symmetric(A: np.ndarray, tol: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > tol * scale:
        raise ValidationError("matrix is not symmetric")
    return A


def canonical_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eigh_sym(A, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (nonincreasing) and orthonormal eigenvectors of symmetric ``A``.

    Uses LAPACK's tridiagonal reduction; only the symmetrized lower triangle
    is read, so asymmetry below ``tol`` (relative) is tolerated.
    """
    A = _check_symmetric(A, tol)
    try:
        w, V = np.linalg.eigh(0.5 * (A + A.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    return w[::-1].copy(), canonical_signs(V[:, ::-1])


def eigh_top(A, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Largest ``k`` eigenpairs (nonincreasing), same sign convention.

    No symmetry check: this is the inner-loop path used by the optimizers on
    matrices the package built itself.
    """
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"cannot take {k} eigenpairs of a {n}x{n} matrix")
    try:
        w, V = scipy.linalg.eigh(A, subset_by_index=(n - k, n - 1), check_finite=False,
                                 driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    if w.size != k:
        # the subset driver can drop eigenvalues in a tight cluster; redo it in full
        try:
            w, V = scipy.linalg.eigh(A, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
        w, V = w[n - k:], V[:, n - k:]
    return w[::-1].copy(), canonical_signs(V[:, ::-1])
