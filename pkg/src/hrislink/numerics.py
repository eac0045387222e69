"""Complex linear-algebra kernel used by the objective and the baselines.

All routines operate on dense complex128 ndarrays (row-major). Matrices are
small (a few hundred rows at most), so the emphasis is on numerical safety:
Hermitian structure is validated before factorizing, and every public
operation returns finite values for finite input or raises.
"""

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionMismatch",
    "NotHermitian",
    "NotPositiveDefinite",
    "ConvergenceFailure",
    "hermitian_logdet",
    "hermitian_inverse",
    "svd",
    "matmul",
    "add",
    "scale",
    "adjoint",
    "vectorize_reim",
]

# Relative tolerance for the Hermitian-symmetry check. Channel-derived
# matrices are O(1e-3) after normalization, so the check must be relative.
HERMITIAN_RTOL = 1e-9


class DimensionMismatch(ValueError):
    """Operand shapes are incompatible."""


class NotHermitian(ValueError):
    """Matrix fails the (relative) Hermitian-symmetry check."""


class NotPositiveDefinite(ValueError):
    """Cholesky factorization hit a non-positive pivot."""


class ConvergenceFailure(RuntimeError):
    """The SVD iteration did not converge within the backend's cap."""


def _as_cmat(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    if not (np.all(np.isfinite(m.real)) and np.all(np.isfinite(m.imag))):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


def _check_hermitian(m: np.ndarray) -> None:
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix is not square: {m.shape}")
    scale_ = np.max(np.abs(m)) if m.size else 0.0
    asym = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if asym > HERMITIAN_RTOL * max(scale_, np.finfo(float).tiny):
        raise NotHermitian(
            f"max |m - m^H| = {asym:.3e} exceeds {HERMITIAN_RTOL:.0e} * max|m| = "
            f"{HERMITIAN_RTOL * scale_:.3e}"
        )


def _cholesky(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a validated Hermitian matrix."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def hermitian_logdet(m) -> float:
    """Natural-log determinant of a Hermitian positive-definite matrix.

    Computed from the Cholesky factor as 2 * sum(ln diag(L)), which is both
    cheaper and numerically safer than an LU route on these matrices.

    Raises:
        NotHermitian: asymmetry above the relative tolerance.
        NotPositiveDefinite: a Cholesky pivot was <= 0.
    """
    m = _as_cmat(m)
    _check_hermitian(m)
    chol = _cholesky(m)
    diag = np.real(np.diagonal(chol))
    if np.any(diag <= 0.0):
        raise NotPositiveDefinite("non-positive Cholesky pivot")
    return float(2.0 * np.sum(np.log(diag)))


def hermitian_inverse(m) -> np.ndarray:
    """Inverse of a Hermitian positive-definite matrix via Cholesky solves.

    The result is re-symmetrized so it is Hermitian to working precision.
    Raises the same errors as :func:`hermitian_logdet`.
    """
    m = _as_cmat(m)
    _check_hermitian(m)
    chol = _cholesky(m)
    eye = np.eye(m.shape[0], dtype=np.complex128)
    y = scipy.linalg.solve_triangular(chol, eye, lower=True)
    inv = scipy.linalg.solve_triangular(chol.conj().T, y, lower=False)
    return 0.5 * (inv + inv.conj().T)


def svd(m):
    """Singular value decomposition m = U @ diag(s) @ V^H (economy size).

    Returns:
        (U, s, V) with s sorted descending and V such that the reconstruction
        uses V^H (i.e. V holds the right singular vectors as columns).

    Raises:
        ConvergenceFailure: the LAPACK iteration hit its internal sweep cap
        (on the order of 100 * max(rows, cols) implicit QR steps).
    """
    m = _as_cmat(m)
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(
            f"SVD did not converge within the backend iteration cap "
            f"(~{100 * max(m.shape)} steps): {exc}"
        ) from exc
    return u, s, vh.conj().T


def matmul(a, b) -> np.ndarray:
    a = _as_cmat(a)
    b = _as_cmat(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a = _as_cmat(a)
    b = _as_cmat(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(a, c) -> np.ndarray:
    return _as_cmat(a) * complex(c)


def adjoint(a) -> np.ndarray:
    """Conjugate transpose."""
    return _as_cmat(a).conj().T


def vectorize_reim(m) -> np.ndarray:
    """Stack column-major real parts then imaginary parts of vec(m).

    A p x q complex matrix maps to a real vector of length 2*p*q:
    [vec(Re m); vec(Im m)].
    """
    m = _as_cmat(m)
    v = m.ravel(order="F")
    return np.concatenate([v.real, v.imag])
