"""Command-line front end: parse -> equilibrium -> certify -> bound ->
screen -> simulate, with reproducible CSV artifacts.

Exit status: 0 on success, 2 when a screening run contains any
inconclusive record, 1 on error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import cct as cctmod
from . import equilibrium as eqm
from . import lmi
from . import sim as simmod
from .lyapunov import LyapunovFunction
from .netmodel import NetworkError, build_system_matrices, line_selector, \
    parse_network


class CliError(RuntimeError):
    pass


def _fmt(v):
    return "%.6g" % v


def _parse_line(text):
    try:
        u, v = text.split("-")
        return tuple(sorted((int(u), int(v))))
    except ValueError:
        raise CliError("line designation must be 'u-v' with integer ids")


def _parse_grid(text):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise CliError("gamma grid must be 'lo:hi:count'")
    if lo <= 0 or hi < lo or count < 1:
        raise CliError("gamma grid needs 0 < lo <= hi and count >= 1")
    if count == 1:
        return np.array([lo])
    return np.logspace(math.log10(lo), math.log10(hi), count)


def _load_model(args, path=None):
    path = path or args.network
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError("cannot read {}: {}".format(path, exc))
    rho = getattr(args, "voltage_fluctuation", None)
    return parse_network(text, fluctuation_rho=rho)


def _pre_model(args):
    if getattr(args, "pre_network", None):
        return _load_model(args, args.pre_network)
    return None


def _screen_cfg(args):
    return cctmod.ScreenConfig(lam=getattr(args, "lam", None))


def _gammas(args):
    if getattr(args, "gamma", None) is not None:
        return np.array([args.gamma])
    if getattr(args, "gamma_grid", None):
        return _parse_grid(args.gamma_grid)
    return cctmod.default_gamma_grid()


def _write(args, text):
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_equilibrium(args):
    model = _load_model(args)
    eq = eqm.solve_sep(model)
    lam = eqm.angle_gap(eq, model, nominal=args.lam)
    beta = eqm.compute_beta(model, lam)
    for bus, angle in zip(model.state_buses, eq.angles):
        print("delta*[{}] = {}".format(bus.id, _fmt(angle)))
    print("max gap = {}".format(_fmt(eq.gap)))
    print("lambda = {}".format(_fmt(lam)))
    print("beta = {} ({})".format(_fmt(beta.beta), beta.mode))
    return 0


def _certify_common(args, gamma):
    model = _load_model(args)
    eq = eqm.solve_sep(model)
    lam = eqm.angle_gap(eq, model, nominal=args.lam)
    beta = eqm.compute_beta(model, lam)
    mats = build_system_matrices(model)
    sel = line_selector(model, args.line)
    res = lmi.solve_certificate(mats, beta.beta, gamma, sel, model=model)
    return model, eq, beta, mats, sel, res


def _cmd_certify(args):
    if args.gamma is None:
        raise CliError("certify requires --gamma")
    args.line = _parse_line(args.line)
    model, eq, beta, mats, sel, res = _certify_common(args, args.gamma)
    if res.status != "ok":
        print("certificate: {} ({})".format(res.status, res.message))
        return 1
    cert = res.certificate
    cfg = cctmod.ScreenConfig(lam=args.lam)
    est = cctmod._estimate_for_cert(model, mats, eq, cert, args.line, sel,
                                    np.zeros(model.n + model.m), cfg, "1")
    print("gamma = {}".format(_fmt(cert.gamma)))
    print("trace(Q) = {}  K = [{}]  H = [{}]".format(
        _fmt(np.trace(cert.Q)),
        " ".join(_fmt(v) for v in cert.K),
        " ".join(_fmt(v) for v in cert.H)))
    print("V_min = {}".format(_fmt(est.vmin)))
    print("bound = {} ({})".format(_fmt(est.bound), est.status))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(lmi.certificate_to_text(cert))
    return 0


def _cmd_cct(args):
    args.line = _parse_line(args.line)
    model = _load_model(args)
    cfg = _screen_cfg(args)
    grid = _gammas(args)
    pre = _pre_model(args)
    if args.procedure == 2:
        est = cctmod.procedure2(model, args.line, args.samples, grid,
                                args.seed, cfg=cfg, model_pre=pre)
    else:
        est = cctmod.procedure1(model, args.line, grid, cfg=cfg,
                                model_pre=pre)
    if est.status == cctmod.INCONCLUSIVE:
        print("inconclusive: {}".format(est.message))
        return 2
    print("gamma = {}".format(_fmt(est.gamma)))
    print("V_min = {}  V(x_pre) = {}".format(_fmt(est.vmin),
                                             _fmt(est.v_pre)))
    print("bound = {} s ({})".format(_fmt(est.bound), est.status))
    return 0


def _contingency_list(args, model):
    if args.contingencies.strip() == "all":
        return list(model.edges)
    return [_parse_line(p) for p in args.contingencies.split(",")]


def _cmd_screen(args):
    if args.clearing_time is None:
        raise CliError("screen requires --clearing-time")
    model = _load_model(args)
    lines = _contingency_list(args, model)
    report = cctmod.screen(model, lines, args.clearing_time, _gammas(args),
                           procedure=args.procedure, cfg=_screen_cfg(args),
                           model_pre=_pre_model(args), seed=args.seed,
                           samples=args.samples)
    _write(args, report.to_csv())
    inconclusive = any(v == cctmod.INCONCLUSIVE for _, v in report.records)
    return 2 if inconclusive else 0


def _cmd_simulate(args):
    if args.clearing_time is None:
        raise CliError("simulate requires --clearing-time")
    args.line = _parse_line(args.line)
    model = _load_model(args)
    eq = eqm.solve_sep(model)
    pre = _pre_model(args)
    x0 = None
    if pre is not None:
        x0 = eqm.pre_fault_offset(eqm.solve_sep(pre), eq, model)
    traj = simmod.run_fault_scenario(model, eq, args.line,
                                     args.clearing_time, dt=args.dt,
                                     horizon=args.horizon, model_pre=pre,
                                     x0=x0)
    verdict = simmod.classify(traj, model, eq)
    _write(args, simmod.trajectory_csv(traj, model, eq))
    print("verdict: {} (final deviation {})".format(
        verdict.kind, _fmt(verdict.final_deviation)), file=sys.stderr)
    return 0


def _cmd_true_cct(args):
    args.line = _parse_line(args.line)
    model = _load_model(args)
    eq = eqm.solve_sep(model)
    pre = _pre_model(args)
    x0 = None
    if pre is not None:
        x0 = eqm.pre_fault_offset(eqm.solve_sep(pre), eq, model)
    tau, status = simmod.true_cct(model, eq, args.line, dt=args.dt,
                                  horizon=args.horizon, model_pre=pre,
                                  x0=x0)
    if status == "ok":
        print("true CCT = {} s".format(_fmt(tau)))
    else:
        print("true CCT >= {} s (no instability below cap)".format(_fmt(tau)))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="artifact",
                                description="Transient-stability contingency "
                                "screening via Lyapunov certificates")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, line=False):
        sp.add_argument("--network", required=True)
        sp.add_argument("--pre-network", dest="pre_network")
        sp.add_argument("--voltage-fluctuation", dest="voltage_fluctuation",
                        type=float)
        sp.add_argument("--lambda", dest="lam", type=float)
        if line:
            sp.add_argument("--line", required=True)

    sp = sub.add_parser("equilibrium")
    common(sp)
    sp.set_defaults(func=_cmd_equilibrium)

    sp = sub.add_parser("certify")
    common(sp, line=True)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--output")
    sp.set_defaults(func=_cmd_certify)

    sp = sub.add_parser("cct")
    common(sp, line=True)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--gamma-grid", dest="gamma_grid")
    sp.add_argument("--procedure", type=int, choices=(1, 2), default=1)
    sp.add_argument("--samples", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_cct)

    sp = sub.add_parser("screen")
    common(sp)
    sp.add_argument("--contingencies", default="all")
    sp.add_argument("--clearing-time", dest="clearing_time", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--gamma-grid", dest="gamma_grid")
    sp.add_argument("--procedure", type=int, choices=(1, 2), default=1)
    sp.add_argument("--samples", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--output")
    sp.set_defaults(func=_cmd_screen)

    sp = sub.add_parser("simulate")
    common(sp, line=True)
    sp.add_argument("--clearing-time", dest="clearing_time", type=float)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--horizon", type=float, default=20.0)
    sp.add_argument("--output")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("true-cct")
    common(sp, line=True)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--horizon", type=float, default=20.0)
    sp.set_defaults(func=_cmd_true_cct)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, NetworkError, eqm.EquilibriumError, lmi.LmiError,
            cctmod.CctError, simmod.SimulationError) as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
