"""Hermite-block machinery for the normalized Fokker-Planck operator.

The space of densities splits into invariant blocks ``V^(m)`` spanned by the
Hermite functions ``g_alpha`` with ``|alpha| = m``.  On block ``m`` the
coefficients ``d_alpha`` evolve by a linear ODE ``d' = -Cm d``; in the
orthonormal basis ``g_alpha / sqrt(alpha!)`` the coefficients are
``d~ = diag(sqrt(alpha!)) d`` and the generator is the conjugate
``Cm_normalized``.  Coefficient vectors follow the grevlex order of
:mod:`hypodecay.tensors`.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fp_core, matlib, propagator, tensors
from .errors import ConditionViolationError, InvalidInputError, ResourceError

GENERATOR_CAP = 10**5
DEFAULT_TRUNCATION = {2: 8, 3: 5}
VERIFY_TOL = 1e-8
RANK1_TOL = 1e-9
FD_STEP = 1e-5
FD_TOL = 1e-6


@dataclass(frozen=True)
class SubspaceGenerator:
    d: int
    m: int
    Cm: np.ndarray
    Cm_normalized: np.ndarray

    @property
    def indices(self):
        return tensors.enumerate_multiindices(self.d, self.m)

    @property
    def size(self):
        return self.Cm.shape[0]


def _sqrt_factorials(d, m):
    return np.array([math.sqrt(tensors.alpha_factorial(a)) for a in tensors.enumerate_multiindices(d, m)])


def build_generator(C, m, cap=GENERATOR_CAP):
    """Generator of the coefficient dynamics on ``V^(m)``.

    Row ``alpha`` collects, for every ``j`` with ``alpha_j >= 1`` and every
    ``l``, the term ``beta_l C[j, l] d_beta`` with ``beta = alpha - e_j + e_l``.
    """
    C = matlib.as_matrix(C, "C", square=True)
    if int(m) != m or m < 1:
        raise InvalidInputError(f"block order must be a positive integer, got {m}")
    m = int(m)
    d = C.shape[0]
    size = tensors.dimension(d, m)
    if size > cap:
        raise ResourceError(f"block m={m} has {size} coefficients, above the cap {cap}")
    idx = tensors.enumerate_multiindices(d, m)
    lookup = tensors.index_map(d, m)
    Cm = np.zeros((size, size))
    for r, alpha in enumerate(idx):
        for j in range(d):
            if alpha[j] < 1:
                continue
            for l in range(d):
                beta = list(alpha)
                beta[j] -= 1
                beta[l] += 1
                Cm[r, lookup[tuple(beta)]] += beta[l] * C[j, l]
    s = _sqrt_factorials(d, m)
    Cm_n = s[:, None] * Cm / s[None, :]
    Cm.setflags(write=False)
    Cm_n.setflags(write=False)
    return SubspaceGenerator(d, m, Cm, Cm_n)


def coeffs_to_tensor(dvec, d, m):
    """Coefficient vector ``d^(m)`` to the symmetric tensor ``D_alpha = d_alpha / gamma_alpha``."""
    dvec = np.asarray(dvec, dtype=float).reshape(-1)
    if dvec.size != tensors.dimension(d, m):
        raise InvalidInputError(f"expected {tensors.dimension(d, m)} coefficients for d={d}, m={m}, "
                                f"got {dvec.size}")
    return tensors.SymTensor(d, m, dvec / tensors.gammas(d, m))


def tensor_to_coeffs(T):
    return T.values * tensors.gammas(T.d, T.m)


def normalize_coeffs(dvec, d, m):
    """``d -> d~ = diag(sqrt(alpha!)) d``."""
    return _sqrt_factorials(d, m) * np.asarray(dvec, dtype=float)


def denormalize_coeffs(dtilde, d, m):
    return np.asarray(dtilde, dtype=float) / _sqrt_factorials(d, m)


def evolve_block(gen, d0, t, normalized=False):
    """``expm(-Cm t) d0`` (or with ``Cm_normalized`` when ``normalized``)."""
    if not t >= 0:
        raise InvalidInputError(f"evolution time must be nonnegative, got {t}")
    d0 = np.asarray(d0, dtype=float).reshape(-1)
    if d0.size != gen.size:
        raise InvalidInputError(f"expected {gen.size} coefficients, got {d0.size}")
    M = gen.Cm_normalized if normalized else gen.Cm
    return matlib.expm(-M * t) @ d0


@dataclass(frozen=True)
class HermiteState:
    """Normalized Hermite coefficients ``d~^(m)`` for ``m = 0..M``; block 0 is the mass."""

    d: int
    blocks: tuple

    def __post_init__(self):
        blocks = []
        for m, b in enumerate(self.blocks):
            b = np.array(b, dtype=float).reshape(-1)
            if b.size != tensors.dimension(self.d, m):
                raise InvalidInputError(f"block {m} needs {tensors.dimension(self.d, m)} entries, got {b.size}")
            b.setflags(write=False)
            blocks.append(b)
        if not blocks:
            raise InvalidInputError("a state needs at least the mass block")
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def M(self):
        return len(self.blocks) - 1

    @property
    def mass(self):
        return float(self.blocks[0][0])

    def deviation_norm(self):
        """Norm of the state minus its equilibrium part, by Plancherel."""
        return math.sqrt(sum(float(b @ b) for b in self.blocks[1:]))

    @classmethod
    def random(cls, d, M, rng, mass=1.0):
        blocks = [np.array([mass])]
        blocks += [rng.standard_normal(tensors.dimension(d, m)) for m in range(1, M + 1)]
        return cls(d, tuple(blocks))

    @classmethod
    def single_block(cls, d, M, m, vec, mass=1.0):
        blocks = [np.array([mass])] + [np.zeros(tensors.dimension(d, k)) for k in range(1, M + 1)]
        blocks[m] = np.asarray(vec, dtype=float)
        return cls(d, tuple(blocks))


def default_truncation(d):
    return DEFAULT_TRUNCATION.get(d, 4 if d <= 5 else 3)


def evolve_state(C, state0, t, generators=None):
    """Evolve every block independently; the mass block is left untouched."""
    C = matlib.as_matrix(C, "C", square=True)
    if C.shape[0] != state0.d:
        raise InvalidInputError(f"C is {C.shape} but the state has d={state0.d}")
    if not t >= 0:
        raise InvalidInputError(f"evolution time must be nonnegative, got {t}")
    blocks = [state0.blocks[0].copy()]
    for m in range(1, state0.M + 1):
        gen = generators[m] if generators is not None else build_generator(C, m)
        blocks.append(evolve_block(gen, state0.blocks[m], t, normalized=True))
    return HermiteState(state0.d, tuple(blocks))


def gradient_seminorm(state):
    """``sqrt(sum_{m>=1} m ||d~^(m)||^2)``: weighted H^1 seminorm in coefficient space."""
    return math.sqrt(sum(m * float(b @ b) for m, b in enumerate(state.blocks) if m >= 1))


def hermite_density(state, points):
    """Evaluate ``f(x) = sum_alpha d~_alpha He_alpha(x) g(x) / sqrt(alpha!)`` at ``points`` (n, d).

    Plotting helper only; it carries no accuracy guarantee.
    """
    from numpy.polynomial import hermite_e

    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != state.d:
        raise InvalidInputError(f"points must have {state.d} columns")
    top = state.M
    # He_n(x_i) for n = 0..M, shape (M+1, n_points, d)
    he = np.stack([hermite_e.hermeval(x, np.eye(top + 1)[n]) for n in range(top + 1)])
    total = np.zeros(x.shape[0])
    for m, block in enumerate(state.blocks):
        for alpha, c in zip(tensors.enumerate_multiindices(state.d, m), block):
            if c == 0.0:
                continue
            term = np.ones(x.shape[0])
            for i, a in enumerate(alpha):
                term *= he[a, :, i]
            total += c / math.sqrt(tensors.alpha_factorial(alpha)) * term
    gauss = np.exp(-0.5 * np.sum(x**2, axis=1)) / (2.0 * math.pi) ** (0.5 * state.d)
    return total * gauss


@dataclass
class CheckReport:
    check: str
    m: object
    t_worst: float
    deviation: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "check": self.check,
            "m": self.m,
            "t_worst": self.t_worst,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.details:
            out["details"] = self.details
        return out


def _require_condition_a(C):
    report = fp_core.check_condition_a(C)
    if not report.passed:
        raise ConditionViolationError("; ".join(report.details) or "Condition A fails", clause="condition A")


def _perturbation(shape, scale, rng):
    E = rng.standard_normal(shape)
    return scale * E / np.linalg.norm(E, 2)


def verify_main_theorem(C, m_max, grid, tol=VERIFY_TOL, perturb=0.0, seed=0):
    """Check ``||expm(-Cm_normalized t)||_2 = h(t)^m`` blockwise on ``grid``.

    Returns one report per block plus a ``full_propagator`` report comparing
    ``sup_m`` of the block norms with ``h``.  With ``perturb > 0`` every block
    with ``m >= 2`` gets a seeded random perturbation of relative size
    ``perturb``; the check is then expected to fail.
    """
    C = matlib.as_matrix(C, "C", square=True)
    _require_condition_a(C)
    t = propagator._check_grid(grid)
    h = propagator.h_values(C, t, workers=1)
    rng = np.random.default_rng(seed)
    reports = []
    block_norms = []
    for m in range(1, int(m_max) + 1):
        G = np.array(build_generator(C, m).Cm_normalized)
        if perturb and m >= 2:
            G = G + _perturbation(G.shape, perturb * matlib.spectral_norm(G), rng)
        norms = matlib.spectral_norms(matlib.expm(-G[None] * t[:, None, None]))
        block_norms.append(norms)
        dev = np.abs(norms - h**m)
        k = int(np.argmax(dev))
        reports.append(CheckReport("main_theorem", m, float(t[k]), float(dev[k]), tol, bool(dev[k] <= tol)))
    sup = np.max(np.stack(block_norms), axis=0)
    dev = np.abs(sup - h)
    k = int(np.argmax(dev))
    reports.append(CheckReport("full_propagator", None, float(t[k]), float(dev[k]), tol, bool(dev[k] <= tol)))
    return reports


def _sym_first_slot(C, D):
    # Sym(C (.)^1 D) on class values
    out = tensors.multilinear_mult(C, D, k=1)
    return out if isinstance(out, tensors.SymTensor) else tensors.symmetrize(out)


def verify_rank1_evolution(C, m, trials, rng=None, times=(0.5, 1.0, 2.0), max_terms=3):
    """Compare block evolution of rank-1 sums with the evolved vectors, and check the derivative.

    Two reports come back: ``rank1_evolution`` (elementwise, relative to
    ``max(1, max|D|)``, tolerance 1e-9) and ``rank1_derivative`` (central
    differences against ``-m Sym(C (.) D)``, tolerance 1e-6).
    """
    C = matlib.as_matrix(C, "C", square=True)
    rng = np.random.default_rng(0) if rng is None else rng
    d = C.shape[0]
    gen = build_generator(C, m)
    worst_ev, t_ev = 0.0, 0.0
    worst_fd = 0.0
    fwd = matlib.expm(-gen.Cm * FD_STEP)
    bwd = matlib.expm(gen.Cm * FD_STEP)
    for _ in range(int(trials)):
        s = int(rng.integers(1, max_terms + 1))
        data = tensors.Rank1Sum(rng.standard_normal(s), rng.standard_normal((s, d)))
        D0 = data.tensor(m)
        d0 = tensor_to_coeffs(D0)
        for t in times:
            Dt = coeffs_to_tensor(evolve_block(gen, d0, t), d, m)
            ref = data.transformed(matlib.expm(-C * t)).tensor(m)
            scale = max(1.0, float(np.max(np.abs(ref.values))))
            dev = float(np.max(np.abs(Dt.values - ref.values))) / scale
            if dev > worst_ev:
                worst_ev, t_ev = dev, float(t)
        fd = (fwd @ d0 - bwd @ d0) / (2.0 * FD_STEP)
        fd_tensor = coeffs_to_tensor(fd, d, m)
        exact = -m * _sym_first_slot(C, D0).values
        scale = max(1.0, float(np.max(np.abs(exact))))
        worst_fd = max(worst_fd, float(np.max(np.abs(fd_tensor.values - exact))) / scale)
    return [
        CheckReport("rank1_evolution", m, t_ev, worst_ev, RANK1_TOL, bool(worst_ev <= RANK1_TOL)),
        CheckReport("rank1_derivative", m, 0.0, worst_fd, FD_TOL, bool(worst_fd <= FD_TOL)),
    ]


def verify_regularization(C, grid, M=None, trials=20, seed=0, tol=1e-6):
    """Gradient seminorm after time t against ``sqrt(max_{m<=M} m h(t)^(2m))``.

    Random unit states must stay below the bound, and the top singular vector
    of the maximizing block must reach it within ``tol``.
    """
    C = matlib.as_matrix(C, "C", square=True)
    _require_condition_a(C)
    d = C.shape[0]
    M = default_truncation(d) if M is None else int(M)
    t = propagator._check_grid(grid)
    t = t[t > 0]
    if t.size == 0:
        raise InvalidInputError("regularization check needs at least one t > 0")
    gens = {m: build_generator(C, m) for m in range(1, M + 1)}
    rng = np.random.default_rng(seed)
    worst, t_worst, m_worst = 0.0, float(t[0]), None
    for tk in t:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", propagator.TruncationWarning)
            bound = math.sqrt(propagator.regularization_envelope(C, tk, M_cap=M))
        for _ in range(trials):
            s0 = HermiteState.random(d, M, rng)
            ratio = gradient_seminorm(evolve_state(C, s0, tk, gens)) / s0.deviation_norm()
            excess = ratio - bound
            if excess > worst:
                worst, t_worst, m_worst = excess, float(tk), None
        h = float(propagator.h_values(C, [tk], workers=1)[0])
        m_hat = max(range(1, M + 1), key=lambda m: m * h ** (2 * m))
        _, _, Vt = np.linalg.svd(matlib.expm(-np.asarray(gens[m_hat].Cm_normalized) * tk))
        s0 = HermiteState.single_block(d, M, m_hat, Vt[0])
        ratio = gradient_seminorm(evolve_state(C, s0, tk, gens)) / s0.deviation_norm()
        gap = abs(ratio - bound)
        if gap > worst:
            worst, t_worst, m_worst = gap, float(tk), m_hat
    return CheckReport("regularization", m_worst, t_worst, worst, tol, bool(worst <= tol))
