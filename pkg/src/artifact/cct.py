"""Clearing-time bounds and contingency screening.

A certificate (Q, K, H) feasible at gamma bounds the fault-on growth of
V by 1/(2 gamma), so a fault cleared before 2 gamma (V_min - V(x_pre))
leaves the state inside the certified region of attraction and the
post-fault dynamics converge.  Procedure 1 sweeps a gamma grid;
Procedure 2 biases certificates toward predicted fault-cleared states
sampled on a sphere and re-maximizes gamma per certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import equilibrium as eqm
from . import lmi
from .lyapunov import LyapunovFunction, compute_vmin, in_region
from .netmodel import build_system_matrices, line_selector, robust_selector

CERTIFIED = "certified-stable"
INCONCLUSIVE = "inconclusive"


class CctError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScreenConfig:
    lam: float | None = None          # sector polytope bound; None = computed
    lmi: lmi.LmiSolveConfig = field(default_factory=lmi.LmiSolveConfig)
    bound_cap: float = 10.0           # truncation of bounds to the validated
                                      # simulation horizon; a weakened lower
                                      # bound stays a lower bound
    tie_tol: float = 1e-12            # procedure-1 tie-break tolerance


@dataclass(frozen=True)
class CctEstimate:
    line: tuple                        # edge or tuple of edges (robust)
    gamma: float
    vmin: float
    v_pre: float
    bound: float                       # 2*gamma*(vmin - v_pre), clamped at 0
                                       # and truncated when status == "capped"
    certificate: object | None
    procedure: str
    status: str                        # ok | capped | inconclusive
    message: str = ""

    @property
    def vgap(self):
        return self.vmin - self.v_pre


@dataclass(frozen=True)
class ScreeningReport:
    records: tuple                     # (CctEstimate, verdict) pairs
    tau_clearing: float
    network_hash: str
    procedure: str
    metadata: dict = field(default_factory=dict)

    def to_csv(self):
        rows = ["line,verdict,gamma,vmin,v_pre,bound,status"]
        for est, verdict in self.records:
            line = "-".join(str(b) for b in est.line) \
                if not isinstance(est.line[0], tuple) \
                else ";".join("-".join(str(b) for b in p) for p in est.line)
            rows.append(",".join([
                line, verdict,
                "%.17g" % est.gamma, "%.17g" % est.vmin,
                "%.17g" % est.v_pre, "%.17g" % est.bound, est.status]))
        return "\n".join(rows) + "\n"

    def to_text(self):
        out = ["network_hash {}".format(self.network_hash),
               "procedure {}".format(self.procedure),
               "tau_clearing %.17g" % self.tau_clearing]
        for key in sorted(self.metadata):
            out.append("{} {}".format(key, self.metadata[key]))
        out.append(self.to_csv().rstrip("\n"))
        return "\n".join(out) + "\n"


def default_gamma_grid(lo=1e-8, hi=1e2, per_decade=20):
    count = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.logspace(math.log10(lo), math.log10(hi), count)


def _inconclusive(line, procedure, message):
    return CctEstimate(line=line, gamma=float("nan"), vmin=float("nan"),
                       v_pre=float("nan"), bound=0.0, certificate=None,
                       procedure=procedure, status=INCONCLUSIVE,
                       message=message)


def cct_bound(cert, vmin, x_pre, lyap, cap=None):
    """tau = 2 gamma (V_min - V(x_pre)), clamped at 0, truncated at cap.

    Evaluated with the gamma-scaled certificate so the arithmetic is O(1)
    at any gamma; V is linear in (Q, K) so the two routes agree exactly.
    """
    x_pre = np.asarray(x_pre, float)
    edge = lyap.mats.C @ x_pre + lyap.delta_star
    if np.max(np.abs(edge)) >= np.pi / 2:
        raise CctError("pre-fault state outside the polytope; "
                       "certificate inapplicable")
    v_pre = lyap.value(x_pre)
    vgap = vmin - v_pre
    bound = 2.0 * cert.gamma * vgap
    status = "ok"
    if bound <= 0.0:
        bound = 0.0
        status = INCONCLUSIVE
    elif cap is not None and bound > cap:
        bound = float(cap)
        status = "capped"
    return CctEstimate(line=None, gamma=cert.gamma, vmin=vmin, v_pre=v_pre,
                       bound=bound, certificate=cert, procedure="",
                       status=status)


def _estimate_for_cert(model, mats, eq, cert, line, sel, x_pre, cfg,
                       procedure, gamma=None):
    """Shared tail of the procedures: vmin, V(x_pre), bound for one cert."""
    gamma = cert.gamma if gamma is None else gamma
    cert = replace(cert, gamma=float(gamma)) if gamma != cert.gamma else cert
    ds = eq.edge_angles(model)
    # scaled copy: vmin and V are linear in (Q, K), so working with
    # gamma*(Q, K, H) keeps all quantities O(1) for extreme gamma
    scaled = cert.scaled(gamma)
    lyap_s = LyapunovFunction(cert=scaled, mats=mats, delta_star=ds)
    vmin_s = compute_vmin(lyap_s).vmin
    est = cct_bound(scaled, vmin_s, x_pre, lyap_s, cap=None)
    # report in unscaled units; bound = 2*gamma*vgap = 2*vgap_scaled
    bound = 2.0 * (vmin_s - est.v_pre)
    status = "ok"
    if bound <= 0.0:
        bound, status = 0.0, INCONCLUSIVE
    elif bound > cfg.bound_cap:
        bound, status = float(cfg.bound_cap), "capped"
    return CctEstimate(line=line, gamma=float(gamma),
                       vmin=vmin_s / gamma, v_pre=est.v_pre / gamma,
                       bound=bound, certificate=cert, procedure=procedure,
                       status=status)


def _setup(model, cfg):
    eq = eqm.solve_sep(model)
    lam = eqm.angle_gap(eq, model, nominal=cfg.lam)
    beta = eqm.compute_beta(model, lam)
    mats = build_system_matrices(model)
    return eq, beta, mats


def _x_pre(model, eq_post, model_pre):
    if model_pre is None:
        return np.zeros(model.n + model.m)
    eq_pre = eqm.solve_sep(model_pre)
    return eqm.pre_fault_offset(eq_pre, eq_post, model)


def procedure1(model, line, gamma_grid, cfg=None, model_pre=None):
    """Sweep the gamma grid, keep the best bound (ties: smallest gamma)."""
    cfg = cfg or ScreenConfig()
    eq, beta, mats = _setup(model, cfg)
    sel = line_selector(model, line)
    x_pre = _x_pre(model, eq, model_pre)
    best = None
    failures = []
    for gamma in gamma_grid:
        res = lmi.solve_certificate(mats, beta.beta, float(gamma), sel,
                                    cfg=cfg.lmi, model=model)
        if res.status != "ok":
            failures.append("gamma={:g}: {}".format(gamma, res.status))
            continue
        est = _estimate_for_cert(model, mats, eq, res.certificate, line,
                                 sel, x_pre, cfg, "1")
        if best is None or est.bound > best.bound + cfg.tie_tol:
            best = est
    if best is None:
        return _inconclusive(line, "1",
                             "no feasible gamma; " + "; ".join(failures))
    return best


def sphere_radius(model, eq):
    """Euclidean distance in angle space from delta* to the polytope edge.

    Each face |delta_kj| = pi/2 is a hyperplane with normal given by the
    incidence row, so the distance is (pi/2 - |delta*_kj|) / ||row||.
    """
    from .netmodel import incidence_matrix
    E = incidence_matrix(model)
    ds = eq.edge_angles(model)
    norms = np.linalg.norm(E, axis=1)
    return float(np.min((np.pi / 2 - np.abs(ds)) / norms))


def procedure2(model, line, k, gamma_grid, seed, cfg=None, model_pre=None):
    """Sphere-sampled certificates with per-sample gamma maximization.

    Certificate adaptation is a surrogate for the original algorithm: the
    solve at the grid midpoint adds a linear objective term lowering
    V(x_i), then the sample is kept only if it lands in the certified
    region.  Flagged in the result message.
    """
    cfg = cfg or ScreenConfig()
    if k < 1:
        raise CctError("need k >= 1 samples")
    eq, beta, mats = _setup(model, cfg)
    sel = line_selector(model, line)
    x_pre = _x_pre(model, eq, model_pre)
    ds = eq.edge_angles(model)
    r = sphere_radius(model, eq)
    rng = np.random.default_rng(seed)
    m, n = model.m, model.n
    gamma_mid = float(np.exp(np.mean(np.log(np.asarray(gamma_grid, float)))))

    best = None
    for _ in range(k):
        u = rng.normal(size=n)
        u *= r / np.linalg.norm(u)
        x_i = np.zeros(n + m)
        x_i[:m] = u[:m]
        x_i[2 * m:] = u[m:]

        def bias(Qw, Kw, x_i=x_i):
            # scaled-variable V(x_i); linear in (Qw, Kw)
            import cvxpy as cp
            y = mats.C @ x_i
            arg = y + ds + mats.alphas
            phi = np.cos(ds + mats.alphas) - np.cos(arg) \
                - y * np.sin(ds + mats.alphas)
            return -(0.5 * cp.quad_form(x_i, Qw) + phi @ Kw)

        res = lmi.solve_certificate(mats, beta.beta, gamma_mid, sel,
                                    cfg=cfg.lmi, model=model,
                                    extra_objective=bias)
        if res.status != "ok":
            continue
        cert = res.certificate
        lyap = LyapunovFunction(cert=cert, mats=mats, delta_star=ds)
        vmin = compute_vmin(lyap).vmin
        if not in_region(lyap, x_i, vmin):
            continue
        gstar = lmi.max_gamma(mats, beta.beta, sel, cert.Q,
                              np.diag(cert.K), np.diag(cert.H), cfg=cfg.lmi)
        if not math.isfinite(gstar):
            gstar = float(gamma_grid[-1])
        est = _estimate_for_cert(model, mats, eq, cert, line, sel, x_pre,
                                 cfg, "2", gamma=gstar)
        if best is None or est.bound > best.bound + cfg.tie_tol:
            best = est
    if best is None:
        return _inconclusive(line, "2", "no accepted sample (surrogate "
                             "adaptation)")
    return replace(best, message="surrogate adaptation")


def robust_screen(model, lines, tau_clearing, gamma_grid, cfg=None,
                  model_pre=None):
    """One shared certificate covering every line in `lines`."""
    cfg = cfg or ScreenConfig()
    lines = [tuple(sorted(p)) for p in lines]
    if not lines:
        raise CctError("robust screening needs a nonempty line set")
    eq, beta, mats = _setup(model, cfg)
    sel = robust_selector(model, lines)
    x_pre = _x_pre(model, eq, model_pre)
    best = None
    for gamma in gamma_grid:
        res = lmi.solve_certificate(mats, beta.beta, float(gamma), sel,
                                    cfg=cfg.lmi, model=model)
        if res.status != "ok":
            continue
        est = _estimate_for_cert(model, mats, eq, res.certificate,
                                 tuple(lines), sel, x_pre, cfg, "robust")
        if best is None or est.bound > best.bound + cfg.tie_tol:
            best = est
    records = []
    for line in lines:
        if best is None:
            records.append((_inconclusive(line, "robust", "infeasible"),
                            INCONCLUSIVE))
        else:
            per = replace(best, line=line)
            verdict = CERTIFIED if tau_clearing < per.bound else INCONCLUSIVE
            records.append((per, verdict))
    return ScreeningReport(records=tuple(records), tau_clearing=tau_clearing,
                           network_hash=model.document_hash(),
                           procedure="robust")


def screen(model, contingencies, tau_clearing, gamma_grid, procedure=1,
           cfg=None, model_pre=None, seed=0, samples=8):
    """Per-contingency screening; certified iff tau_clearing < bound."""
    cfg = cfg or ScreenConfig()
    records = []
    for idx, line in enumerate(contingencies):
        line = tuple(sorted(line))
        try:
            if procedure == 2:
                est = procedure2(model, line, samples, gamma_grid,
                                 seed + idx, cfg=cfg, model_pre=model_pre)
            else:
                est = procedure1(model, line, gamma_grid, cfg=cfg,
                                 model_pre=model_pre)
        except (CctError, lmi.LmiError, eqm.EquilibriumError) as exc:
            est = _inconclusive(line, str(procedure), str(exc))
        verdict = CERTIFIED if (est.status in ("ok", "capped")
                                and tau_clearing < est.bound) \
            else INCONCLUSIVE
        records.append((est, verdict))
    return ScreeningReport(records=tuple(records), tau_clearing=tau_clearing,
                           network_hash=model.document_hash(),
                           procedure=str(procedure))
