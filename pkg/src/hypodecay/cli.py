"""Command-line front end: ``hypodecay <command> [problem.json | --kinetic-a A] [options]``.

Exit codes: 0 success, 1 verification failure, 2 invalid or ill-posed input,
3 numerical failure.
"""

import argparse
import math
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__, fp_core, matlib, propagator, serialize, subspace
from .errors import HypodecayError, InvalidInputError, NumericalFailureError

DEFAULT_GRIDS = {
    "norm-curve": (0.0, 10.0, 201, "linear"),
    "best-constant": (0.0, 20.0, 401, "linear"),
    "verify": (0.0, 5.0, 50, "linear"),
    "kinetic-fp": (0.0, 20.0, 401, "linear"),
}
DEFAULT_KINETIC = (0.2, 0.25, 2.0)


@dataclass
class RunConfig:
    pd_tol: float = matlib.PD_TOL
    cluster_tol: float = None
    verify_tol: float = subspace.VERIFY_TOL
    t_min: float = None
    t_max: float = None
    points: int = None
    spacing: str = None
    m_max: int = 4
    epsilon: object = None
    fmt: str = None
    seed: int = 0
    trials: int = 20
    perturb: float = 0.0
    closed_form: bool = False
    deficits: bool = False
    subspace_m: list = field(default_factory=list)

    def validate(self):
        if self.t_min is not None and not self.t_min >= 0:
            raise InvalidInputError("--t-min must be nonnegative")
        if self.points is not None and self.points < 2:
            raise InvalidInputError("--points must be at least 2")
        if self.m_max < 1:
            raise InvalidInputError("--m-max must be at least 1")
        if self.trials < 1:
            raise InvalidInputError("--trials must be at least 1")
        if self.perturb < 0:
            raise InvalidInputError("--perturb must be nonnegative")
        for tol in (self.pd_tol, self.verify_tol):
            if not tol > 0:
                raise InvalidInputError("tolerances must be positive")
        return self

    def grid(self, command):
        t0, t1, n, spacing = DEFAULT_GRIDS[command]
        t0 = t0 if self.t_min is None else self.t_min
        t1 = t1 if self.t_max is None else self.t_max
        n = n if self.points is None else self.points
        spacing = spacing if self.spacing is None else self.spacing
        if not t1 > t0:
            raise InvalidInputError(f"need t_max > t_min, got [{t0}, {t1}]")
        if spacing == "log":
            if t0 <= 0:
                raise InvalidInputError("log spacing needs --t-min > 0")
            return np.geomspace(t0, t1, n)
        return np.linspace(t0, t1, n)


def _add_common(p):
    src = p.add_argument_group("problem")
    src.add_argument("problem", nargs="?", help="problem JSON file {d, C_tilde, D_tilde, label}")
    src.add_argument("--kinetic-a", type=float, action="append", metavar="A",
                     help="use the kinetic FP problem with parameter A instead of a file")
    tol = p.add_argument_group("tolerances")
    tol.add_argument("--pd-tol", type=float, default=matlib.PD_TOL)
    tol.add_argument("--cluster-tol", type=float, default=None)
    tol.add_argument("--verify-tol", type=float, default=subspace.VERIFY_TOL)
    grid = p.add_argument_group("time grid")
    grid.add_argument("--t-min", type=float)
    grid.add_argument("--t-max", type=float)
    grid.add_argument("--points", type=int)
    grid.add_argument("--spacing", choices=("linear", "log"))
    out = p.add_argument_group("output")
    out.add_argument("--format", dest="fmt", choices=("csv", "json"))
    out.add_argument("-o", "--output", help="write the result here instead of stdout")
    out.add_argument("--plot", metavar="PATH", help="also render a figure (png, pdf or svg)")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hypodecay",
        description="Propagator norms, sharp decay constants and Hermite-block checks "
                    "for linear Fokker-Planck equations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="normalization, Condition A, gap and hypocoercivity index")
    _add_common(p)

    p = sub.add_parser("norm-curve", help="h(t) = ||exp(-Ct)|| on a grid (CSV)")
    _add_common(p)
    p.add_argument("--closed-form", action="store_true", help="add the exact kinetic curve")
    p.add_argument("--deficits", action="store_true", help="add an accurate 1 - h(t) column")
    p.add_argument("--subspace-m", type=int, action="append", default=[], metavar="M",
                   help="add the norm of the block-M propagator (repeatable)")

    p = sub.add_parser("best-constant", help="sharp constant c with h(t) <= c exp(-(mu-eps) t)")
    _add_common(p)
    p.add_argument("--epsilon", default=None,
                   help="rate reduction; a number or 'auto' for mu/100 (needed when defective)")

    p = sub.add_parser("verify", help="run the Hermite-block verification suite")
    _add_common(p)
    p.add_argument("--m-max", type=int, default=4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--perturb", type=float, default=0.0,
                   help="perturb the block generators by this relative size (negative control)")

    p = sub.add_parser("kinetic-fp", help="kinetic FP curves against their closed form")
    _add_common(p)
    return parser


def _config(args):
    cfg = RunConfig(
        pd_tol=args.pd_tol, cluster_tol=args.cluster_tol, verify_tol=args.verify_tol,
        t_min=args.t_min, t_max=args.t_max, points=args.points, spacing=args.spacing,
        fmt=args.fmt, seed=args.seed)
    for name in ("m_max", "trials", "perturb", "closed_form", "deficits", "subspace_m", "epsilon"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    return cfg.validate()


def _problems(args):
    if args.kinetic_a and args.problem:
        raise InvalidInputError("give either a problem file or --kinetic-a, not both")
    if args.kinetic_a:
        return [fp_core.kinetic_problem(a) for a in args.kinetic_a]
    if args.problem:
        return [serialize.load_problem(args.problem)]
    raise InvalidInputError("no problem given: pass a JSON file or --kinetic-a")


def _single(args):
    probs = _problems(args)
    if len(probs) > 1:
        raise InvalidInputError("this command takes a single problem")
    return probs[0]


def _index_out(m):
    return "infinite" if m == fp_core.INFINITE else int(m)


def cmd_analyze(args, cfg):
    problem = _single(args)
    raw_index = fp_core.hypocoercivity_index_raw(problem.Ctilde, problem.Dtilde, cfg.pd_tol)
    norm = fp_core.normalize(problem, pd_tol=cfg.pd_tol)
    cond = fp_core.check_condition_a(norm.C, cfg.pd_tol)
    gap = fp_core.spectral_gap(norm.C, cfg.cluster_tol)
    report = {
        "label": problem.label,
        "d": problem.dim,
        "condition": cond.to_dict(),
        "mu": gap.mu,
        "defective": gap.defective,
        "max_jordan": gap.max_jordan,
        "m_hc": _index_out(norm.m_hc),
        "m_hc_raw": _index_out(raw_index),
        "alpha": _index_out(norm.alpha),
        "gap_eigenvalues": [[z.real, z.imag] for z in gap.gap_eigenvalues],
        "normalization_error": norm.normalization_error,
        "K": norm.K,
        "C": norm.C,
    }
    code = 0
    if not cond.passed:
        clause = "C_S >= 0" if not cond.cs_psd else "kawashima"
        _warn(f"Condition A fails ({clause}): " + "; ".join(cond.details))
        code = 2
    return serialize.dumps(report), code


def _normalized(problem, cfg):
    return fp_core.normalize(problem, pd_tol=cfg.pd_tol)


def cmd_norm_curve(args, cfg):
    problem = _single(args)
    norm = _normalized(problem, cfg)
    t = cfg.grid("norm-curve")
    curve = propagator.h_curve(norm.C, t, deficits=cfg.deficits)
    cols = {"t": t, "h": curve.values}
    if cfg.closed_form:
        if not args.kinetic_a:
            raise InvalidInputError("--closed-form is only available for --kinetic-a problems")
        cols["closed_form"] = propagator.kinetic_fp_closed_form(args.kinetic_a[0], t)
    if cfg.deficits:
        cols["deficit"] = curve.deficits
    blocks = {}
    for m in sorted(set(cfg.subspace_m)):
        G = np.asarray(subspace.build_generator(norm.C, m).Cm_normalized)
        blocks[m] = matlib.spectral_norms(matlib.expm(-G[None] * t[:, None, None]))
        cols[f"block_m{m}"] = blocks[m]
    if args.plot:
        from . import plotting
        plotting.plot_norm_curve(args.plot, t, curve.values, closed_form=cols.get("closed_form"),
                                 subspace=blocks, title=problem.label or None)
    if cfg.fmt == "json":
        return serialize.dumps({"label": problem.label, "method": curve.method, "columns": cols}), 0
    return serialize.write_csv(cols), 0


def _epsilon(value, mu):
    if value is None:
        return 0.0
    if str(value).lower() == "auto":
        return mu / 100.0
    try:
        eps = float(value)
    except ValueError:
        raise InvalidInputError(f"--epsilon must be a number or 'auto', got {value!r}") from None
    if eps < 0:
        raise InvalidInputError("--epsilon must be nonnegative")
    return eps


def cmd_best_constant(args, cfg):
    problem = _single(args)
    norm = _normalized(problem, cfg)
    eps = _epsilon(cfg.epsilon, norm.mu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", propagator.TailWarning)
        if norm.dim == 2 and eps == 0 and not norm.defective:
            report = propagator.best_constant_2x2(norm.C)
        else:
            report = propagator.best_constant_numeric(norm.C, epsilon=eps,
                                                      t_max=cfg.t_max if cfg.t_max else None)
    out = {"label": problem.label}
    out.update(report.to_dict())
    if args.plot:
        from . import plotting
        horizon = 4.0 * report.t_argmax if math.isfinite(report.t_argmax) and report.t_argmax > 0 else 20.0 / norm.mu
        t = np.linspace(0.0, horizon, 400)
        scaled = np.exp((report.mu - eps) * t) * propagator.h_values(norm.C, t)
        plotting.plot_best_constant(args.plot, t, scaled, report)
    return serialize.dumps(out), 0


def _short_time_check(C, m_hc):
    t = np.geomspace(1e-5, 1.0, 200)
    curve = propagator.h_curve(C, t, deficits=True, workers=1)
    alpha_fit, c_fit = propagator.short_time_fit(curve)
    expected = 2 * m_hc + 1
    dev = abs(alpha_fit - expected)
    return subspace.CheckReport("short_time_exponent", None, 0.0, dev, 0.15, bool(dev <= 0.15),
                                {"alpha_fit": alpha_fit, "c_fit": c_fit, "alpha_expected": expected})


def cmd_verify(args, cfg):
    problem = _single(args)
    norm = _normalized(problem, cfg)
    C = norm.C
    t = cfg.grid("verify")
    rng = np.random.default_rng(cfg.seed)
    checks = subspace.verify_main_theorem(C, cfg.m_max, t, tol=cfg.verify_tol,
                                          perturb=cfg.perturb, seed=cfg.seed)
    for m in range(1, cfg.m_max + 1):
        checks += subspace.verify_rank1_evolution(C, m, cfg.trials, rng)
    reg_grid = np.geomspace(1e-2, 2.0, 8)
    checks.append(subspace.verify_regularization(C, reg_grid, trials=max(1, cfg.trials // 2), seed=cfg.seed))
    if norm.m_hc != fp_core.INFINITE:
        checks.append(_short_time_check(C, norm.m_hc))
    passed = all(c.passed for c in checks)
    out = {
        "label": problem.label,
        "seed": cfg.seed,
        "perturb": cfg.perturb,
        "m_max": cfg.m_max,
        "checks": [c.to_dict() for c in checks],
        "pass": passed,
    }
    if args.plot:
        from . import plotting
        h = propagator.h_values(C, t)
        blocks = {}
        for m in range(1, cfg.m_max + 1):
            G = np.asarray(subspace.build_generator(C, m).Cm_normalized)
            blocks[m] = matlib.spectral_norms(matlib.expm(-G[None] * t[:, None, None]))
        plotting.plot_block_norms(args.plot, t, h, blocks)
    if not passed:
        failed = [c.check + ("" if c.m is None else f"[m={c.m}]") for c in checks if not c.passed]
        _warn("verification failed: " + ", ".join(failed))
    return serialize.dumps(out), 0 if passed else 1


def cmd_kinetic_fp(args, cfg):
    if args.problem:
        raise InvalidInputError("kinetic-fp takes --kinetic-a values, not a problem file")
    values = args.kinetic_a or list(DEFAULT_KINETIC)
    t = cfg.grid("kinetic-fp")
    cols = {"t": t}
    summary = []
    curves = {}
    for a in values:
        norm = _normalized(fp_core.kinetic_problem(a), cfg)
        h = propagator.h_values(norm.C, t)
        exact = propagator.kinetic_fp_closed_form(a, t)
        cols[f"h_a={a:g}"] = h
        cols[f"exact_a={a:g}"] = exact
        item = {"a": a, "mu": norm.mu, "defective": norm.defective, "max_jordan": norm.max_jordan,
                "m_hc": _index_out(norm.m_hc), "max_abs_error": float(np.max(np.abs(h - exact)))}
        bound = None
        if not norm.defective:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", propagator.TailWarning)
                rep = propagator.best_constant_2x2(norm.C)
            item["c1"] = rep.closed_form if rep.closed_form is not None else rep.c_numeric
            bound = item["c1"] * np.exp(-norm.mu * t)
        summary.append(item)
        curves[a] = (h, exact, bound)
    if args.plot:
        from . import plotting
        plotting.plot_kinetic(args.plot, t, curves)
    if cfg.fmt == "json":
        return serialize.dumps({"problems": summary}), 0
    return serialize.write_csv(cols), 0


COMMANDS = {
    "analyze": cmd_analyze,
    "norm-curve": cmd_norm_curve,
    "best-constant": cmd_best_constant,
    "verify": cmd_verify,
    "kinetic-fp": cmd_kinetic_fp,
}


def _warn(msg):
    print(f"hypodecay: {msg}", file=sys.stderr)


def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None):
    """Parse ``argv``, run the command and return the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        text, code = COMMANDS[args.command](args, cfg)
    except HypodecayError as exc:
        clause = getattr(exc, "clause", None)
        prefix = f"[{clause}] " if clause else ""
        _warn(f"{type(exc).__name__}: {prefix}{exc}")
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        _warn(f"numerical failure: {exc}")
        return NumericalFailureError.exit_code
    except ValueError as exc:
        _warn(f"invalid input: {exc}")
        return InvalidInputError.exit_code
    _emit(text, args.output)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
