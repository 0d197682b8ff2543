"""Linear-drift Fokker-Planck problems: normalization, Condition A, gap, index.

A problem ``dg/dt = div(Dtilde grad g + Ctilde y g)`` is brought to normalized
form by ``x = K^{-1/2} y`` where ``K`` solves the Lyapunov equation
``2 Dtilde = Ctilde K + K Ctilde^T``.  In the new coordinates the drift is
``C = K^{-1/2} Ctilde K^{1/2}`` and the diffusion equals ``C_S``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import matlib
from .errors import ConditionViolationError, InvalidInputError

INFINITE = math.inf


@dataclass(frozen=True)
class FpProblem:
    Ctilde: np.ndarray
    Dtilde: np.ndarray
    label: str = ""

    def __post_init__(self):
        C = matlib.as_matrix(self.Ctilde, "Ctilde", square=True)
        D = matlib.as_matrix(self.Dtilde, "Dtilde", square=True)
        if C.shape != D.shape:
            raise InvalidInputError(f"Ctilde is {C.shape} but Dtilde is {D.shape}")
        if np.max(np.abs(D - D.T)) > 1e-12 * max(1.0, np.max(np.abs(D))):
            raise InvalidInputError("Dtilde is not symmetric")
        D = 0.5 * (D + D.T)
        if not np.any(D):
            raise InvalidInputError("Dtilde is trivial (zero diffusion)")
        if not matlib.is_positive_semidefinite(D):
            raise InvalidInputError("Dtilde is not positive semidefinite")
        C.setflags(write=False)
        D.setflags(write=False)
        object.__setattr__(self, "Ctilde", C)
        object.__setattr__(self, "Dtilde", D)

    @property
    def dim(self):
        return self.Ctilde.shape[0]


def kinetic_problem(a):
    """The kinetic FP equation in (x, v) with confinement parameter ``a > 0``."""
    if not a > 0:
        raise InvalidInputError(f"kinetic parameter must be positive, got {a}")
    return FpProblem(np.array([[0.0, -1.0], [a, 1.0]]), np.diag([0.0, 1.0]), label=f"kinetic a={a:g}")


def kinetic_drift(a):
    """Normalized kinetic drift ``[[0, -sqrt(a)], [sqrt(a), 1]]``."""
    r = math.sqrt(a)
    return np.array([[0.0, -r], [r, 1.0]])


@dataclass(frozen=True)
class GapInfo:
    mu: float
    defective: bool
    max_jordan: int
    gap_eigenvalues: tuple = ()


@dataclass(frozen=True)
class NormalizedFp:
    C: np.ndarray
    K: np.ndarray
    K_half: np.ndarray
    K_half_inv: np.ndarray
    mu: float
    defective: bool
    max_jordan: int
    m_hc: object
    normalization_error: float = field(default=0.0)

    @property
    def dim(self):
        return self.C.shape[0]

    @property
    def alpha(self):
        return INFINITE if self.m_hc == INFINITE else 2 * self.m_hc + 1


@dataclass
class ConditionReport:
    cs_psd: bool
    kawashima_ok: bool
    positive_stable: bool
    details: list = field(default_factory=list)

    @property
    def passed(self):
        return self.cs_psd and self.kawashima_ok

    def to_dict(self):
        return {
            "cs_psd": self.cs_psd,
            "kawashima_ok": self.kawashima_ok,
            "positive_stable": self.positive_stable,
            "pass": self.passed,
            "details": list(self.details),
        }


def _index_search(gen, S, pd_tol):
    d = S.shape[0]
    T = np.array(S, dtype=float)
    P = np.eye(d)
    for m in range(d):
        if m > 0:
            P = gen @ P
            T = T + P @ S @ P.T
        if matlib.is_positive_definite(0.5 * (T + T.T), pd_tol):
            return m
    return INFINITE


def hypocoercivity_index(C, pd_tol=matlib.PD_TOL):
    """Smallest m with ``sum_{j<=m} C_AS^j C_S (C_AS^T)^j`` positive definite.

    The search stops at ``d - 1`` (by Cayley-Hamilton nothing new appears
    afterwards); ``INFINITE`` is returned when no such m exists.
    """
    C = matlib.as_matrix(C, "C", square=True)
    return _index_search(matlib.antisym_part(C), matlib.sym_part(C), pd_tol)


def hypocoercivity_index_raw(Ctilde, Dtilde, pd_tol=matlib.PD_TOL):
    """Index of the unnormalized problem, from ``sum_j Ctilde^j Dtilde (Ctilde^T)^j``."""
    C = matlib.as_matrix(Ctilde, "Ctilde", square=True)
    D = matlib.as_matrix(Dtilde, "Dtilde", square=True)
    return _index_search(C, 0.5 * (D + D.T), pd_tol)


def spectral_gap(C, cluster_tol=None):
    """Spectral gap ``mu = min Re(lambda)``, defectiveness and largest Jordan block at the gap.

    Every eigenvalue cluster whose real part lies within ``cluster_tol`` of
    ``mu`` counts as a gap eigenvalue.
    """
    C = matlib.as_matrix(C, "C", square=True)
    if cluster_tol is None:
        cluster_tol = matlib.default_cluster_tol(C)
    eig = matlib.eigen_analyze(C, cluster_tol)
    mu = float(np.min(eig.eigenvalues.real))
    defective = False
    M = 1
    gap = []
    for lam, a, g in zip(eig.eigenvalues, eig.algebraic, eig.geometric):
        if lam.real - mu > cluster_tol:
            continue
        gap.append(complex(lam))
        if g < a:
            defective = True
            M = max(M, matlib.max_jordan_block(C, lam, a, cluster_tol))
    return GapInfo(mu, defective, M, tuple(gap))


def check_condition_a(C, pd_tol=matlib.PD_TOL):
    """Condition A: ``C_S >= 0`` and no nontrivial ``C^T``-invariant subspace in ``ker C_S``.

    The second clause is tested as ``T_{d-1} > 0``; positive stability is
    reported separately as a cross-check.
    """
    C = matlib.as_matrix(C, "C", square=True)
    S = matlib.sym_part(C)
    details = []
    cs_psd = matlib.is_positive_semidefinite(S, pd_tol)
    if not cs_psd:
        details.append(f"C_S is indefinite (min eigenvalue {np.linalg.eigvalsh(S)[0]:.3e})")
    m_hc = hypocoercivity_index(C, pd_tol) if cs_psd else INFINITE
    kawashima_ok = cs_psd and m_hc != INFINITE
    if cs_psd and not kawashima_ok:
        if not np.any(S):
            details.append("C_S = 0: no diffusion at all")
        else:
            details.append("ker C_S contains a nontrivial C^T-invariant subspace (T_{d-1} is singular)")
    mu = float(np.min(np.linalg.eigvals(C).real))
    positive_stable = mu > matlib.default_cluster_tol(C)
    if not positive_stable:
        details.append(f"C is not positive stable (spectral gap {mu:.3e})")
    if kawashima_ok:
        details.append(f"hypocoercivity index {m_hc}")
        if not positive_stable:
            details.append("inconsistent: Condition A holds but C is not positive stable")
    return ConditionReport(cs_psd, kawashima_ok, positive_stable, details)


def normalize(problem, pd_tol=matlib.PD_TOL, identity_tol=1e-9):
    """Normalize ``problem`` so that the diffusion equals the symmetric part of the drift."""
    C_t, D_t = problem.Ctilde, problem.Dtilde
    K = matlib.solve_lyapunov(C_t, D_t)
    try:
        K_half, K_half_inv = matlib.sqrtm_spd(K, pd_tol)
    except InvalidInputError:
        raise ConditionViolationError(
            "covariance K is singular: ker Dtilde contains a Ctilde^T-invariant subspace "
            "(clause 2 of the raw Condition A fails)",
            clause="kawashima",
        ) from None
    C = K_half_inv @ C_t @ K_half
    D = K_half_inv @ D_t @ K_half_inv
    err = float(np.linalg.norm(matlib.sym_part(C) - D, 2))
    if err > identity_tol * max(1.0, np.linalg.norm(D, 2)):
        raise ConditionViolationError(
            f"normalization identity D = C_S violated by {err:.3e}", clause="normalization")
    gap = spectral_gap(C)
    m_hc = hypocoercivity_index(C, pd_tol)
    return NormalizedFp(C, K, K_half, K_half_inv, gap.mu, gap.defective, gap.max_jordan, m_hc, err)
