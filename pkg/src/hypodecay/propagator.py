"""Propagator norms ``h(t) = ||exp(-C t)||_2`` and the constants derived from them."""

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fp_core, matlib
from .errors import (
    ConditionViolationError,
    DefectiveInputError,
    InsufficientSignalError,
    InvalidInputError,
    UnboundedSupremumError,
)

EPS = np.finfo(float).eps
THREADS_ENV = "HYPODECAY_THREADS"
# deficits 1 - h below this switch from direct evaluation to the Gramian integral
_GRAMIAN_SWITCH = 1e-2
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class TruncationWarning(UserWarning):
    pass


class TailWarning(UserWarning):
    pass


@dataclass
class NormCurve:
    times: np.ndarray
    values: np.ndarray
    method: str = "expm"
    deficits: np.ndarray = None
    tolerances: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise InvalidInputError("times and values must have the same length")
        if self.deficits is not None:
            self.deficits = np.asarray(self.deficits, dtype=float)


def thread_count():
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _check_grid(grid):
    t = np.asarray(grid, dtype=float).reshape(-1)
    if t.size == 0:
        raise InvalidInputError("empty time grid")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise InvalidInputError("time grid must be finite and nonnegative")
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("time grid must be sorted")
    return t


def _norms(C, times):
    return matlib.spectral_norms(matlib.expm(-C[None] * times[:, None, None]))


def h_values(C, times, workers=None):
    """``||exp(-C t)||_2`` for every t, optionally split over threads.

    Each point is computed independently, so the chunking never changes
    the result.
    """
    C = matlib.as_matrix(C, "C", square=True)
    times = np.asarray(times, dtype=float).reshape(-1)
    workers = thread_count() if workers is None else max(1, int(workers))
    if workers == 1 or times.size < 64:
        return _norms(C, times)
    chunks = np.array_split(times, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda ch: _norms(C, ch), chunks))
    return np.concatenate(parts)


def _gramian_deficit(C, t):
    # 1 - h(t)^2 = lambda_min( int_0^t 2 exp(-C^T s) C_S exp(-C s) ds ); no cancellation
    S = matlib.sym_part(C)
    n_panels = max(1, int(math.ceil(t * max(1.0, np.linalg.norm(C, 2)) / 0.5)))
    edges = np.linspace(0.0, t, n_panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mids[:, None] + half[:, None] * _GL_NODES[None, :]).reshape(-1)
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).reshape(-1)
    E = matlib.expm(-C[None] * nodes[:, None, None])
    W = 2.0 * np.einsum("k,kji,jl,klm->im", weights, E, S, E, optimize=True)
    lam = float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
    lam = max(lam, 0.0)
    return lam / (1.0 + math.sqrt(max(1.0 - lam, 0.0)))


def deficit_values(C, times):
    """``1 - h(t)`` with full relative accuracy where ``h`` is close to 1."""
    C = matlib.as_matrix(C, "C", square=True)
    times = np.asarray(times, dtype=float).reshape(-1)
    direct = 1.0 - _norms(C, times)
    out = direct.copy()
    for i, t in enumerate(times):
        if t > 0 and direct[i] < _GRAMIAN_SWITCH:
            out[i] = _gramian_deficit(C, t)
    return out


def h_curve(C, grid, deficits=False, workers=None):
    """Sample ``h(t) = ||exp(-C t)||_2`` on ``grid``."""
    t = _check_grid(grid)
    C = matlib.as_matrix(C, "C", square=True)
    values = h_values(C, t, workers)
    tol = {"expm": "pade13", "expm_rtol": 1e-12}
    defs = deficit_values(C, t) if deficits else None
    return NormCurve(t, values, method="expm-pade13", deficits=defs, tolerances=tol)


def kinetic_fp_closed_form(a, t):
    """Exact propagator norm of the kinetic FP equation with parameter ``a``.

    Three regimes: overdamped ``a < 1/4`` (real ``theta = sqrt(1-4a)``),
    underdamped ``a > 1/4`` (``|exp(theta t) - 1| = 2|sin(sqrt(4a-1) t/2)|``)
    and the critical, defective case ``a = 1/4``.
    """
    if not a > 0:
        raise InvalidInputError(f"kinetic parameter must be positive, got {a}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidInputError("closed form needs t >= 0")
    if a < 0.25:
        th = math.sqrt(1.0 - 4.0 * a)
        one_minus_e1 = -np.expm1(-th * t)
        e2 = np.exp(-2.0 * th * t)
        q = np.tanh(0.5 * th * t)
        c2 = (e2 + (1.0 - th**2) / (2.0 * th**2) * one_minus_e1**2
              + 0.5 * (1.0 - e2) * (1.0 + np.sqrt(1.0 + (th**-2 - 1.0) * q**2) / th))
        mu = 0.5 * (1.0 - th)
    elif a > 0.25:
        w2 = 4.0 * a - 1.0
        x = 2.0 * np.abs(np.sin(0.5 * math.sqrt(w2) * t))
        c2 = 1.0 + x / (2.0 * w2) * (x + np.sqrt(x**2 + 4.0 * w2))
        mu = 0.5
    else:
        c2 = 1.0 + 0.5 * t**2 + t * np.sqrt(1.0 + (0.5 * t) ** 2)
        mu = 0.5
    return np.sqrt(c2) * np.exp(-mu * t)


@dataclass
class ConstantReport:
    mu: float
    c_numeric: float
    t_argmax: float
    epsilon: float
    case_tag: str
    closed_form: float = None
    tolerance: float = 0.0
    attained_at_infinity: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "mu": self.mu,
            "c_numeric": self.c_numeric,
            "t_argmax": self.t_argmax,
            "epsilon": self.epsilon,
            "closed_form": self.closed_form,
            "case_tag": self.case_tag,
            "tolerance": self.tolerance,
            "attained_at_infinity": self.attained_at_infinity,
            "warnings": list(self.warnings),
        }


def _case_2x2(lams, tol):
    l1, l2 = sorted(lams, key=lambda z: (z.real, z.imag))
    if abs(l1.real - l2.real) <= tol:
        return "nd_case1"
    if abs(l1.imag - l2.imag) <= tol:
        return "nd_case2"
    return "nd_case3"


def _golden_max(f, lo, hi, tol=1e-13, maxiter=200):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(maxiter):
        if hi - lo <= tol * (1.0 + abs(hi)):
            break
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _uniform_norms(B, dt, n):
    # ||exp(-B k dt)|| for k = 0..n by repeated multiplication; coarse search only
    step = matlib.expm(-B * dt)
    stack = np.empty((n + 1,) + B.shape)
    stack[0] = np.eye(B.shape[0])
    for k in range(1, n + 1):
        stack[k] = stack[k - 1] @ step
    return matlib.spectral_norms(stack)


def best_constant_numeric(C, epsilon=0.0, t_max=None, n_coarse=4000, n_refine=5):
    """Sharp constant ``sup_{t>=0} exp((mu - eps) t) h(t)`` by grid search and golden refinement.

    The supremum is evaluated as ``||exp(-(C - (mu - eps) I) t)||`` so no
    underflow occurs for large t.  When the coarse maximum sits at the end of
    the search window the supremum is reported as attained at infinity
    together with a warning.
    """
    C = matlib.as_matrix(C, "C", square=True)
    if epsilon < 0:
        raise InvalidInputError("epsilon must be nonnegative")
    gap = fp_core.spectral_gap(C)
    mu = gap.mu
    if mu <= 0:
        raise ConditionViolationError(f"C is not positive stable (mu = {mu:.3e})", clause="positive stability")
    if gap.defective and epsilon == 0:
        raise UnboundedSupremumError(
            "C is defective at the spectral gap: no finite constant exists at the sharp rate; "
            "pass epsilon > 0")
    d = C.shape[0]
    tol = matlib.default_cluster_tol(C)
    eig = np.linalg.eigvals(C)
    slower = eig.real[eig.real > mu + tol]
    mu_next = float(slower.min() - mu) if slower.size else mu
    if t_max is None:
        t_max = 50.0 / mu_next
        # past the transient the scaled norm is periodic in the gap block; cover two periods
        gap_freq = float(np.ptp([z.imag for z in gap.gap_eigenvalues])) if gap.gap_eigenvalues else 0.0
        if gap_freq > tol:
            t_max += 2.0 * (2.0 * math.pi / gap_freq)
        if epsilon > 0:
            t_max = max(t_max, 20.0 * gap.max_jordan / epsilon)
    freq = float(np.ptp(eig.imag)) if d > 1 else 0.0
    n_lin = int(min(20000, max(n_coarse, math.ceil(t_max * freq * 64 / (2 * math.pi)))))

    rate = mu - epsilon
    B = C - rate * np.eye(d)

    def F(t):
        return float(matlib.spectral_norm(matlib.expm(-B * t)))

    lin_t = np.linspace(0.0, t_max, n_lin + 1)
    lin_v = _uniform_norms(B, lin_t[1], n_lin)
    log_t = np.geomspace(1e-3 / max(mu, 1e-300), t_max, 400)
    log_t = log_t[log_t < t_max]
    log_v = h_values(B, log_t, workers=1)
    t_all = np.concatenate([lin_t, log_t])
    v_all = np.concatenate([lin_v, log_v])
    order = np.argsort(t_all, kind="stable")
    t_all, v_all = t_all[order], v_all[order]

    found = [(0.0, 1.0)]
    interior = np.where((v_all[1:-1] >= v_all[:-2]) & (v_all[1:-1] >= v_all[2:]))[0] + 1
    top = interior[np.argsort(v_all[interior])[::-1][:n_refine]]
    early = interior[v_all[interior] >= v_all.max() * (1.0 - 1e-3)][:3]
    for k in sorted(set(top.tolist()) | set(early.tolist())):
        found.append(_golden_max(F, t_all[k - 1], t_all[k + 1]))
    best_v = max(v for _, v in found)
    # periodic suprema repeat; report the earliest maximizer
    best_t = min(t for t, v in found if v >= best_v * (1.0 - 1e-10))

    report = ConstantReport(mu=mu, c_numeric=best_v, t_argmax=float(best_t), epsilon=float(epsilon),
                            case_tag=_case_tag(C, gap), tolerance=1e-9 * best_v)
    v_end = F(t_max)
    tail = v_all[t_all >= 0.9 * t_max]
    monotone_tail = bool(np.all(np.diff(tail) >= -1e-10 * tail[1:]))
    if monotone_tail and v_end > 1.0 + 1e-12 and v_end >= best_v * (1.0 - 1e-9):
        report.c_numeric = max(best_v, v_end)
        report.t_argmax = math.inf
        report.attained_at_infinity = True
        msg = f"supremum approached as t -> infinity (monotone tail up to t_max = {t_max:.6g})"
        report.warnings.append(msg)
        warnings.warn(msg, TailWarning, stacklevel=2)
    return report


def _case_tag(C, gap):
    if gap.defective:
        return "defective"
    if C.shape[0] == 2:
        return _case_2x2(list(np.linalg.eigvals(C)), matlib.default_cluster_tol(C))
    if matlib.is_positive_definite(matlib.sym_part(C)):
        return "coercive"
    return "general_d"


def best_constant_2x2(C):
    """Closed-form sharp constant for positive stable, non-defective 2x2 drifts.

    ``alpha`` is the cosine of the angle between the eigenvectors of ``C^T``.
    Equal real parts give ``sqrt((1+alpha)/(1-alpha))``; distinct real parts
    with equal imaginary parts give ``1/sqrt(1-alpha^2)``; the remaining case
    falls back to the numeric supremum.
    """
    C = matlib.as_matrix(C, "C", square=True)
    if C.shape != (2, 2):
        raise InvalidInputError(f"best_constant_2x2 needs a 2x2 matrix, got {C.shape}")
    gap = fp_core.spectral_gap(C)
    if gap.defective:
        raise DefectiveInputError("C is defective; use best_constant_numeric with epsilon > 0")
    if gap.mu <= 0:
        raise InvalidInputError("C is not positive stable")
    tol = matlib.default_cluster_tol(C)
    lams, W = np.linalg.eig(C.T)
    if abs(lams[0] - lams[1]) <= tol:
        cos_angle = 0.0  # non-defective double eigenvalue: C is a multiple of I
    else:
        w1, w2 = W[:, 0], W[:, 1]
        cos_angle = float(abs(np.vdot(w1, w2)) / (np.linalg.norm(w1) * np.linalg.norm(w2)))
    case = _case_2x2(list(lams), tol)
    if case == "nd_case1":
        closed = math.sqrt((1.0 + cos_angle) / (1.0 - cos_angle))
    elif case == "nd_case2":
        closed = 1.0 / math.sqrt(1.0 - cos_angle**2)
    else:
        closed = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailWarning)
        report = best_constant_numeric(C)
    report.case_tag = case
    report.closed_form = closed
    if closed is not None:
        report.tolerance = 1e-5 * closed
        dev = abs(report.c_numeric - closed)
        if dev > report.tolerance:
            report.warnings.append(f"closed form and numeric supremum differ by {dev:.3e}")
    return report


def short_time_fit(curve, t_window=None, min_decades=1.5, max_deficit=1e-2, span_decades=2.0):
    """Fit ``1 - h(t) ~ c t^alpha`` by least squares in log-log coordinates.

    Uses ``curve.deficits`` when present (accurate ``1 - h``), else ``1 - values``.
    Points at round-off level are discarded; without ``t_window`` only points
    with deficit at most ``max_deficit`` and within ``span_decades`` of the
    smallest usable time enter the fit.
    """
    t = np.asarray(curve.times, dtype=float)
    if curve.deficits is not None:
        # Gramian deficits carry an absolute error of order eps * t
        deficit = curve.deficits
        floor = 1e3 * EPS * np.maximum(t, EPS)
    else:
        deficit = 1.0 - np.asarray(curve.values)
        floor = 1e3 * EPS
    mask = (t > 0) & (deficit > floor)
    if t_window is not None:
        mask &= (t >= t_window[0]) & (t <= t_window[1])
    else:
        # stay in the asymptotic regime: the lowest decades with resolvable signal
        mask &= deficit <= max_deficit
        if mask.any():
            mask &= t <= t[mask].min() * 10.0**span_decades
    if mask.sum() < 3:
        raise InsufficientSignalError("fewer than three points with 1 - h(t) above round-off",
                                      {"points": int(mask.sum())})
    tt, dd = t[mask], deficit[mask]
    decades = math.log10(tt.max() / tt.min())
    if decades < min_decades:
        raise InsufficientSignalError(f"fit window spans only {decades:.2f} decades",
                                      {"decades": decades})
    slope, intercept = np.polyfit(np.log(tt), np.log(dd), 1)
    return float(slope), float(math.exp(intercept))


def regularization_envelope(C, t, M_cap=None):
    """``max_{1<=m<=M_cap} m h(t)^{2m}``: squared norm of the gradient map on Hermite blocks up to M_cap.

    ``m h^{2m}`` is unimodal in m with continuous maximizer
    ``m* = 1/(2 ln(1/h))``, so only ``1``, ``floor(m*)`` and ``ceil(m*)``
    (clipped to the cap) need evaluating.
    """
    if not t > 0:
        raise InvalidInputError(f"regularization envelope needs t > 0, got {t}")
    C = matlib.as_matrix(C, "C", square=True)
    deficit = float(deficit_values(C, [t])[0])
    if not deficit > 0:
        raise InvalidInputError(f"h({t}) = 1: no decay, envelope unbounded")
    log_inv_h = -math.log1p(-deficit)
    m_star = 1.0 / (2.0 * log_inv_h)
    if M_cap is None:
        M_cap = max(1, math.ceil(4.0 * m_star))
    if M_cap < m_star:
        warnings.warn(f"M_cap = {M_cap} is below the maximizer m* = {m_star:.4g}; envelope truncated",
                      TruncationWarning, stacklevel=2)
    cands = {1, min(M_cap, max(1, math.floor(m_star))), min(M_cap, max(1, math.ceil(m_star)))}
    return max(m * math.exp(-2.0 * m * log_inv_h) for m in cands)


def _exp_linear_crossover():
    # positive root of exp(-2x) = 1 - x
    x = 0.8
    for _ in range(50):
        f = math.exp(-2 * x) - 1 + x
        x -= f / (1 - 2 * math.exp(-2 * x))
    return x


@dataclass
class DualityReport:
    alpha: float
    delta: float
    c_tilde_sq: float
    c2: float
    delta2: float
    worst_margin: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def regularization_duality(C, alpha, delta, n=400):
    """From the measured envelope ``G(t)^2 <= c~^2 t^-alpha`` on ``(0, delta]`` build
    ``c2 = log(2) / (8 c~^2)`` and ``delta2``, then check ``h(t) <= 1 - c2 t^alpha``
    on ``(0, delta2]``.
    """
    C = matlib.as_matrix(C, "C", square=True)
    ts = np.geomspace(delta * 1e-3, delta, n)
    c_tilde_sq = max(t**alpha * regularization_envelope(C, t) for t in ts)
    c_bar = 1.0 / c_tilde_sq
    c2 = math.log(2.0) * c_bar / 8.0
    t1 = ((math.e - 2.0) / c_bar) ** (1.0 / alpha)
    t2 = _exp_linear_crossover() / c2
    delta2 = min(delta, t1, t2 ** (1.0 / alpha))
    check_t = np.geomspace(delta2 * 1e-3, delta2, n)
    margins = deficit_values(C, check_t) - c2 * check_t**alpha
    worst = float(np.min(margins))
    return DualityReport(float(alpha), float(delta), float(c_tilde_sq), float(c2), float(delta2),
                         worst, bool(worst >= 0.0))
