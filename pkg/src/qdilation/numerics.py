"""Dense complex linear algebra primitives.

Norms, Hermitian square roots, pseudo-inverses, defect decompositions,
central 2x2 contractive completions and the elementary rotation used by
unitary dilations.  Every function is pure and works on numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TOL",
    "RANK_TOL",
    "DEFECT_NOISE",
    "InputError",
    "NotAContractionError",
    "ClassFlags",
    "DefectData",
    "CompletionData",
    "as_matrix",
    "adjoint",
    "opnorm",
    "herm_sqrt",
    "pinv",
    "classify",
    "defect_decomp",
    "defect_rows",
    "dkw_complete",
    "rotation_embed",
]

TOL = 1e-8
RANK_TOL = 1e-10
# eigenvalues of I - T*T at rounding level (about n * eps) are noise; their
# square roots, far above eps, must not count as defect directions
DEFECT_NOISE = 64 * np.finfo(float).eps


class InputError(ValueError):
    """Raised when an input matrix has the wrong shape or structure."""


class NotAContractionError(InputError):
    """Raised when an operator that must be a contraction has norm > 1."""


def as_matrix(M) -> np.ndarray:
    """Return ``M`` as a 2d complex array (scalars become 1x1)."""
    A = np.asarray(M, dtype=complex)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise InputError(f"expected a matrix, got array of shape {A.shape}")
    return A


def adjoint(M) -> np.ndarray:
    return as_matrix(M).conj().T


def opnorm(M) -> float:
    """Largest singular value."""
    A = as_matrix(M)
    if A.size == 0:
        if A.shape[0] == 0 and A.shape[1] == 0:
            raise InputError("opnorm of an empty matrix")
        return 0.0
    return float(np.linalg.norm(A, 2))


def _hermitian_part(M: np.ndarray, tol: float) -> np.ndarray:
    if M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got {M.shape}")
    skew = np.abs(M - M.conj().T).max() if M.size else 0.0
    scale = max(1.0, np.abs(M).max() if M.size else 0.0)
    if skew > tol * scale:
        raise InputError(f"matrix is not Hermitian (skew part {skew:.3e})")
    return (M + M.conj().T) / 2


def herm_sqrt(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Positive square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-rank_tol, 0)`` are clamped to zero.
    """
    H = _hermitian_part(as_matrix(M), max(TOL, rank_tol))
    if H.size == 0:
        return H.copy()
    w, U = np.linalg.eigh(H)
    if w.min() < -max(rank_tol, TOL):
        raise InputError(f"matrix has a negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    R = (U * np.sqrt(w)) @ U.conj().T
    return (R + R.conj().T) / 2


def pinv(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with an absolute singular-value cut."""
    A = as_matrix(M)
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]), dtype=complex)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    keep = s > rank_tol
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


@dataclass(frozen=True)
class ClassFlags:
    contraction: bool
    isometry: bool
    coisometry: bool
    unitary: bool


def classify(M, tol: float = TOL) -> ClassFlags:
    A = as_matrix(M)
    m, n = A.shape
    iso = opnorm(A.conj().T @ A - np.eye(n)) <= tol if n else True
    coiso = opnorm(A @ A.conj().T - np.eye(m)) <= tol if m else True
    contr = (opnorm(A) if A.size else 0.0) <= 1 + tol
    return ClassFlags(contr, bool(iso), bool(coiso), bool(iso and coiso))


@dataclass(frozen=True)
class DefectData:
    """Defect operator ``D_T = (I - T*T)^(1/2)`` with a numerical-rank basis.

    ``defect_basis`` has orthonormal columns spanning the range of D_T and
    ``singular_values`` holds the matching eigenvalues of D_T.
    """

    defect_operator: np.ndarray
    defect_rank: int
    defect_basis: np.ndarray
    singular_values: np.ndarray


def _check_contraction(T: np.ndarray, tol: float) -> None:
    if T.size and opnorm(T) > 1 + tol:
        raise NotAContractionError(f"operator norm {opnorm(T):.12g} exceeds 1")


def defect_decomp(T, rank_tol: float = RANK_TOL, tol: float = TOL) -> DefectData:
    T = as_matrix(T)
    _check_contraction(T, tol)
    n = T.shape[1]
    M = np.eye(n) - T.conj().T @ T
    M = (M + M.conj().T) / 2
    w, U = np.linalg.eigh(M)
    w = np.clip(w, 0.0, None)
    s = np.sqrt(w)
    D = (U * s) @ U.conj().T
    keep = s > max(rank_tol, np.sqrt(DEFECT_NOISE * max(n, 1)))
    order = np.argsort(-s[keep], kind="stable")
    basis = U[:, keep][:, order]
    return DefectData((D + D.conj().T) / 2, int(keep.sum()), basis, s[keep][order])


def defect_rows(T, rank_tol: float = RANK_TOL, tol: float = TOL) -> np.ndarray:
    """Matrix ``G`` (r x n) with ``G* G = I - T* T`` and orthogonal rows.

    ``G = diag(sigma) E*`` where E is the defect basis, so ``G h`` are the
    coordinates of ``D_T h`` in that basis.
    """
    dd = defect_decomp(T, rank_tol, tol)
    return dd.singular_values[:, None] * dd.defect_basis.conj().T


@dataclass(frozen=True)
class CompletionData:
    mu: float
    W_param: np.ndarray
    Z_param: np.ndarray
    completion: np.ndarray


def dkw_complete(A, B, C, tol: float = TOL, rank_tol: float = RANK_TOL) -> CompletionData:
    """Central completion of ``[[A, B], [C, X]]`` with norm equal to mu.

    After scaling by ``1/mu`` the data satisfy ``B = D_{A*} W`` and
    ``C = Z D_A`` for contractions W, Z; the central choice is
    ``X = -Z A* W`` (scaled back).
    """
    A, B, C = as_matrix(A), as_matrix(B), as_matrix(C)
    p, r = A.shape
    if B.shape[0] != p or C.shape[1] != r:
        raise InputError(f"incompatible blocks A{A.shape} B{B.shape} C{C.shape}")
    s, t = C.shape[0], B.shape[1]
    row = np.hstack([A, B])
    col = np.vstack([A, C])
    mu = max(opnorm(row) if row.size else 0.0, opnorm(col) if col.size else 0.0)
    if mu <= rank_tol:
        z = np.zeros((s, t), dtype=complex)
        return CompletionData(mu, np.zeros((p, t), dtype=complex), np.zeros((s, r), dtype=complex), z)
    a, b, c = A / mu, B / mu, C / mu
    DAs = herm_sqrt(np.eye(p) - a @ a.conj().T, rank_tol)
    DA = herm_sqrt(np.eye(r) - a.conj().T @ a, rank_tol)
    # a lenient cut keeps W, Z bounded when D_A has tiny nonzero eigenvalues
    cut = max(rank_tol, np.sqrt(tol) * 1e-1)
    W = pinv(DAs, cut) @ b
    Z = c @ pinv(DA, cut)
    X = -(Z @ a.conj().T @ W) * mu
    return CompletionData(mu, W, Z, X)


def rotation_embed(T, rank_tol: float = RANK_TOL, tol: float = TOL) -> np.ndarray:
    """Unitary ``[[T, D_{T*}], [D_T, -T*]]``."""
    T = as_matrix(T)
    _check_contraction(T, tol)
    m, n = T.shape
    DT = herm_sqrt(np.eye(n) - T.conj().T @ T, rank_tol)
    DTs = herm_sqrt(np.eye(m) - T @ T.conj().T, rank_tol)
    return np.block([[T, DTs], [DT, -T.conj().T]])
