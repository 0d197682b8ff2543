"""Dense small-matrix kernel.

Everything here works on plain ``numpy`` arrays of ``float64`` (complex
arithmetic is used internally for eigenstructure only).  The functions are
pure; none of them keeps state between calls.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IllConditionedError,
    InvalidInputError,
    NoUniqueSolutionError,
    NumericalFailureError,
)

PD_TOL = 1e-9
CLUSTER_RTOL = 1e-7
SYMMETRY_TOL = 1e-10

# Pade(13) coefficients and the 1-norm bound below which no scaling is needed
# (Higham 2005, backward error below unit roundoff).
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def as_matrix(A, name="A", square=False):
    """Return ``A`` as a finite 2-D float array, raising InvalidInputError otherwise."""
    try:
        arr = np.array(A, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: not a real matrix ({exc})") from None
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError(f"{name}: expected a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: contains non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name}: expected a square matrix, got shape {arr.shape}")
    return arr


def sym_part(A):
    return 0.5 * (A + A.T)


def antisym_part(A):
    return 0.5 * (A - A.T)


def spectral_norm(A):
    """Largest singular value of ``A``."""
    A = as_matrix(A)
    if not np.any(A):
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def spectral_norms(stack):
    """Spectral norms of a stack of matrices with shape ``(n, r, c)``."""
    stack = np.asarray(stack, dtype=float)
    return np.linalg.svd(stack, compute_uv=False)[..., 0]


def expm(A):
    """Matrix exponential by scaling and squaring with a degree-13 Pade core.

    Accepts a single square matrix or a stack ``(..., n, n)``; every matrix in
    a stack is scaled and squared independently, so the result for one matrix
    does not depend on what else is in the batch.
    """
    A = np.array(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInputError(f"expm: expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("expm: non-finite entries")
    single = A.ndim == 2
    if single:
        A = A[None]
    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape((-1, n, n))

    norms = np.abs(A).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA13, np.ceil(np.log2(norms / _THETA13)), 0.0).astype(int)
    A = A / (2.0 ** s)[:, None, None]

    b = _PADE13
    ident = np.broadcast_to(np.eye(n), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    try:
        R = np.linalg.solve(V - U, V + U)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("expm: singular Pade denominator", {"error": str(exc)}) from None

    for k in range(int(s.max(initial=0))):
        mask = s > k
        R[mask] = R[mask] @ R[mask]

    # exp(0) = I exactly (the Pade solve leaves rounding noise otherwise)
    R[norms == 0] = np.eye(n)
    R = R.reshape(batch_shape + (n, n))
    return R[0] if single else R


def solve_lyapunov(Ctilde, Dtilde, rtol=1e-10):
    """Solve ``Ctilde K + K Ctilde^T = 2 Dtilde`` for symmetric ``K``.

    The system is vectorised row-major as ``(Ctilde (x) I + I (x) Ctilde) vec K
    = 2 vec Dtilde`` and solved densely; d is small, so the O(d^6) cost is fine.
    One step of iterative refinement is applied before the residual check.
    """
    C = as_matrix(Ctilde, "Ctilde", square=True)
    D = as_matrix(Dtilde, "Dtilde", square=True)
    if C.shape != D.shape:
        raise InvalidInputError(f"shape mismatch: Ctilde {C.shape} vs Dtilde {D.shape}")
    if np.max(np.abs(D - D.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(D))):
        raise InvalidInputError("Dtilde is not symmetric")
    eig = np.linalg.eigvals(C)
    if np.min(eig.real) <= 0:
        raise NoUniqueSolutionError(
            f"Ctilde is not positive stable (min Re eigenvalue {np.min(eig.real):.3e})",
            clause="positive stability of Ctilde",
        )
    d = C.shape[0]
    I = np.eye(d)
    op = np.kron(C, I) + np.kron(I, C)
    cond = np.linalg.cond(op)
    if not np.isfinite(cond) or cond > 1e14:
        raise IllConditionedError("Kronecker Lyapunov system is numerically singular", {"cond": cond})
    rhs = 2.0 * D.reshape(-1)
    x = np.linalg.solve(op, rhs)
    x += np.linalg.solve(op, rhs - op @ x)
    K = x.reshape(d, d)
    K = 0.5 * (K + K.T)
    residual = np.linalg.norm(C @ K + K @ C.T - 2.0 * D, 2)
    if residual > rtol * (1.0 + np.linalg.norm(D, 2)):
        raise IllConditionedError("Lyapunov residual too large", {"residual": residual, "cond": cond})
    return K


def default_cluster_tol(A):
    return CLUSTER_RTOL * (1.0 + spectral_norm(A))


def numerical_rank(A, tol):
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv > tol))


@dataclass(frozen=True)
class EigenData:
    """Clustered eigenstructure of a square matrix.

    ``eigenvalues[i]`` is the mean of the i-th cluster; the multiplicity lists
    are aligned with it.  ``raw`` keeps the unclustered LAPACK output.
    """

    eigenvalues: np.ndarray
    algebraic: tuple
    geometric: tuple
    cluster_tol: float
    raw: np.ndarray = field(repr=False, default=None)

    @property
    def defective(self):
        return any(g < a for a, g in zip(self.algebraic, self.geometric))


def _cluster(values, tol):
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = [np.array([values[i] for i in idx]) for idx in groups.values()]
    clusters.sort(key=lambda c: (np.mean(c).real, np.mean(c).imag))
    return clusters


def eigen_analyze(A, cluster_tol=None):
    """Eigenvalues clustered within ``cluster_tol`` with algebraic/geometric multiplicities.

    The geometric multiplicity of a cluster is the dimension of the numerical
    null space of ``A - lambda I`` at the cluster mean, capped by the cluster
    size.
    """
    A = as_matrix(A, square=True)
    if cluster_tol is None:
        cluster_tol = default_cluster_tol(A)
    try:
        raw = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("eigenvalue iteration did not converge",
                                    {"error": str(exc), "shape": A.shape}) from None
    d = A.shape[0]
    clusters = _cluster(list(raw), cluster_tol)
    eigenvalues, alg, geo = [], [], []
    for c in clusters:
        lam = complex(np.mean(c))
        null_dim = d - numerical_rank(A - lam * np.eye(d), cluster_tol)
        eigenvalues.append(lam)
        alg.append(len(c))
        geo.append(int(min(max(null_dim, 1), len(c))))
    return EigenData(np.array(eigenvalues), tuple(alg), tuple(geo), float(cluster_tol), raw)


def max_jordan_block(A, lam, algebraic, tol):
    """Largest Jordan block for eigenvalue ``lam`` from ranks of powers of ``A - lam I``.

    The null space of ``(A - lam I)^k`` reaches the algebraic multiplicity at
    ``k`` = largest block size.  The rank threshold for the k-th power is
    ``tol * max(1, ||A - lam I||)^(k-1)``.
    """
    d = A.shape[0]
    B = A - lam * np.eye(d)
    growth = max(1.0, np.linalg.norm(B, 2))
    P = np.eye(d, dtype=complex)
    for k in range(1, algebraic + 1):
        P = P @ B
        if d - numerical_rank(P, tol * growth ** (k - 1)) >= algebraic:
            return k
    return algebraic


def _check_symmetric(A, name):
    A = as_matrix(A, name, square=True)
    scale = max(1.0, np.max(np.abs(A)))
    if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def is_positive_definite(A, tol=PD_TOL):
    """True iff ``min eig(A) > tol * max(1, ||A||)`` for symmetric ``A``."""
    A = _check_symmetric(A, "A")
    w = np.linalg.eigvalsh(A)
    return bool(w[0] > tol * max(1.0, np.max(np.abs(w))))


def is_positive_semidefinite(A, tol=PD_TOL):
    """Semidefinite variant: ``min eig(A) >= -tol * max(1, ||A||)``."""
    A = _check_symmetric(A, "A")
    w = np.linalg.eigvalsh(A)
    return bool(w[0] >= -tol * max(1.0, np.max(np.abs(w))))


def sqrtm_spd(K, tol=PD_TOL):
    """Return ``(K^{1/2}, K^{-1/2})`` for symmetric positive definite ``K``."""
    K = _check_symmetric(K, "K")
    w, Q = np.linalg.eigh(K)
    if w[0] <= tol * max(1.0, w[-1]):
        raise InvalidInputError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    r = np.sqrt(w)
    half = (Q * r) @ Q.T
    half_inv = (Q / r) @ Q.T
    return 0.5 * (half + half.T), 0.5 * (half_inv + half_inv.T)
