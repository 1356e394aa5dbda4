"""Assembly and solution of the certificate LMIs.

Three assemblies are provided: the stability LMI (Eq. 13 of the
underlying method; beta = 0 recovers the basic LMI), the bounding LMI
with the gamma quadratic term (Eq. 17), and its Schur-complement form
linear in (Q, K, H) (Eq. 19).  The semidefinite solve uses a
barrier-centered maximum-scale heuristic over the Schur form, carried
out in gamma-scaled variables for conditioning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import GENERATOR, INFINITE


class LmiError(RuntimeError):
    pass


@dataclass(frozen=True)
class LmiSolveConfig:
    eps_q: float = 1e-6          # PSD floor on Q
    eps_h: float = 1e-8          # floor on the H diagonal
    trace_cap: float | None = None   # cap on trace(gamma Q); default n+m
    slack_tol: float = 1e-8      # normalized feasibility slack
    gamma_bisect_tol: float = 1e-6


@dataclass(frozen=True)
class CertificateMatrices:
    Q: np.ndarray       # (n+m) x (n+m) symmetric PSD
    K: np.ndarray       # |E| diagonal entries, nonnegative
    H: np.ndarray       # |E| diagonal entries, nonnegative
    gamma: float
    beta: float
    solver_status: str = field(default="", compare=False)

    def scaled(self, c):
        return CertificateMatrices(Q=c * self.Q, K=c * self.K, H=c * self.H,
                                   gamma=self.gamma, beta=self.beta,
                                   solver_status=self.solver_status)


@dataclass(frozen=True)
class SolveResult:
    status: str                       # "ok" | "infeasible" | "nonconverged"
    certificate: CertificateMatrices | None = None
    message: str = ""


def psd_slack(M, sym_tol=1e-8):
    """Largest eigenvalue of a symmetric matrix; NSD iff <= tolerance."""
    M = np.asarray(M, float)
    asym = np.max(np.abs(M - M.T))
    if asym > sym_tol * (1.0 + np.max(np.abs(M))):
        raise LmiError("matrix is not symmetric (defect {:.3e})".format(asym))
    return float(np.linalg.eigvalsh((M + M.T) / 2).max())


def normalized_slack(M):
    """psd_slack divided by max(1, spectral norm) for scale-free tests."""
    s = psd_slack(M)
    nrm = float(np.linalg.norm(np.asarray(M, float), 2))
    return s / max(1.0, nrm)


def _diag(v, ne):
    v = np.asarray(v, float)
    if v.ndim == 2:
        return v
    return np.diag(np.broadcast_to(v, (ne,)))


def assemble_stability_lmi(mats, beta, Q, K, H):
    """[[A'Q + QA - 2 beta C'HC, R], [R', -2H]] with
    R = QB - (1+beta) C'H - (K C A)'."""
    ne = mats.n_edges
    Kd, Hd = _diag(K, ne), _diag(H, ne)
    A, B, C = mats.A, mats.B, mats.C
    At = A.T @ Q + Q @ A - 2.0 * beta * C.T @ Hd @ C
    R = Q @ B - (1.0 + beta) * C.T @ Hd - (Kd @ C @ A).T
    return np.block([[At, R], [R.T, -2.0 * Hd]])


def assemble_bounding_lmi(mats, beta, gamma, sel, Q, K, H):
    """Stability LMI with the gamma (QBD)(QBD)' term in the top-left block."""
    if gamma < 0:
        raise LmiError("gamma must be nonnegative")
    M = assemble_stability_lmi(mats, beta, Q, K, H)
    nx = mats.n + mats.m
    QB = Q @ mats.B
    M[:nx, :nx] += gamma * QB @ sel.matrix @ QB.T
    return M


def assemble_schur_lmi(mats, beta, gamma, sel, Q, K, H):
    """Schur form, linear in (Q, K, H):
    [[At, (sqrt(gamma) QBR, Rt)], [.., -blockdiag(I, 2H)]], R R' = D."""
    if gamma < 0:
        raise LmiError("gamma must be nonnegative")
    ne = mats.n_edges
    nx = mats.n + mats.m
    Kd, Hd = _diag(K, ne), _diag(H, ne)
    A, B, C = mats.A, mats.B, mats.C
    At = A.T @ Q + Q @ A - 2.0 * beta * C.T @ Hd @ C
    Rt = Q @ B - (1.0 + beta) * C.T @ Hd - (Kd @ C @ A).T
    col = np.hstack([math.sqrt(gamma) * (Q @ B @ sel.half), Rt])
    L = np.block([[np.eye(ne), np.zeros((ne, ne))],
                  [np.zeros((ne, ne)), 2.0 * Hd]])
    return np.block([[At, col], [col.T, -L]])


def load_incident_edges(model):
    """Indices of edges with at least one load endpoint.

    On these edges K is constrained proportional to S so that the extra
    derivative term through C B (nonzero when loads are present) stays
    nonpositive; on generator-only edges K is a free diagonal.
    """
    kinds = {b.id: b.kind for b in model.buses}
    out = []
    for i, (k, j) in enumerate(model.edges):
        if kinds[k] not in (GENERATOR, INFINITE) or \
           kinds[j] not in (GENERATOR, INFINITE):
            out.append(i)
    return out


def solve_certificate(mats, beta, gamma, sel, cfg=None, model=None,
                      extra_objective=None):
    """Find (Q, K, H) making the Schur LMI negative semidefinite at gamma.

    The heuristic maximizes  gamma*logdet(-M) + trace(gamma Q)  subject to
    the PSD floors and a cap on trace(gamma Q); the barrier keeps the
    solution strictly feasible while the trace term pushes the certificate
    scale (and with it the clearing-time bound) as high as the gamma term
    allows.  Solved in the scaled variables w = gamma * (Q, K, H), in which
    all data is O(1) for any gamma.  Solver output is re-verified against
    the bounding LMI and never trusted.
    """
    import cvxpy as cp

    if gamma <= 0:
        raise LmiError("gamma must be positive")
    cfg = cfg or LmiSolveConfig()
    ne = mats.n_edges
    nx = mats.n + mats.m
    cap = cfg.trace_cap if cfg.trace_cap is not None else float(nx)

    Qw = cp.Variable((nx, nx), symmetric=True)
    Hw = cp.Variable(ne, nonneg=True)
    if model is not None:
        tied = load_incident_edges(model)
    else:
        tied = []
    if tied:
        kap = cp.Variable(nonneg=True)
        entries = []
        for i in range(ne):
            if i in tied:
                entries.append(kap * float(mats.S[i]))
            else:
                entries.append(cp.Variable(nonneg=True))
        Kw = cp.hstack(entries)
    else:
        Kw = cp.Variable(ne, nonneg=True)

    A, B, C = mats.A, mats.B, mats.C
    Hd = cp.diag(Hw)
    Kd = cp.diag(Kw)
    At = A.T @ Qw + Qw @ A - 2.0 * beta * C.T @ Hd @ C
    Rt = Qw @ B - (1.0 + beta) * C.T @ Hd - cp.transpose(Kd @ C @ A)
    col = cp.hstack([math.sqrt(gamma) * (Qw @ B @ sel.half), Rt])
    L = cp.bmat([[gamma * np.eye(ne), np.zeros((ne, ne))],
                 [np.zeros((ne, ne)), 2.0 * Hd]])
    M = cp.bmat([[At, col], [cp.transpose(col), -L]])

    objective = gamma * cp.log_det(-M) + cp.trace(Qw)
    if extra_objective is not None:
        objective = objective + extra_objective(Qw, Kw)
    constraints = [Qw >> gamma * cfg.eps_q * np.eye(nx),
                   Hw >= gamma * cfg.eps_h,
                   cp.trace(Qw) <= cap]
    prob = cp.Problem(cp.Maximize(objective), constraints)

    status = None
    for solver in ("CLARABEL", "SCS"):
        try:
            if solver == "CLARABEL":
                prob.solve(solver=cp.CLARABEL)
            else:
                prob.solve(solver=cp.SCS, eps=1e-7, max_iters=50000)
            status = prob.status
        except cp.error.SolverError:
            status = "solver_error"
            continue
        if status in ("optimal", "optimal_inaccurate"):
            break
        if status in ("infeasible", "infeasible_inaccurate"):
            return SolveResult(status="infeasible",
                               message="infeasible at gamma={:g}".format(gamma))
    if status not in ("optimal", "optimal_inaccurate") or Qw.value is None:
        return SolveResult(status="nonconverged",
                           message="solver status {}".format(status))

    Q = np.asarray(Qw.value) / gamma
    Q = (Q + Q.T) / 2
    K = np.maximum(np.asarray(Kw.value).ravel() / gamma, 0.0)
    H = np.maximum(np.asarray(Hw.value).ravel() / gamma, cfg.eps_h)
    cert = CertificateMatrices(Q=Q, K=K, H=H, gamma=float(gamma),
                               beta=float(beta), solver_status=status)
    slack = normalized_slack(
        assemble_bounding_lmi(mats, beta, gamma, sel, Q, np.diag(K), np.diag(H)))
    if slack > cfg.slack_tol:
        return SolveResult(status="nonconverged", certificate=cert,
                           message="re-verification slack {:.3e}".format(slack))
    return SolveResult(status="ok", certificate=cert)


def max_gamma(mats, beta, sel, Q, K, H, cfg=None):
    """Largest gamma keeping the bounding LMI NSD for fixed (Q, K, H).

    The gamma term is PSD and linear in gamma, so the feasible set is an
    interval [0, gamma*] and bisection on the max eigenvalue is valid.
    Returns math.inf when doubling reaches 2**60 (QBD decoupled).
    """
    cfg = cfg or LmiSolveConfig()

    def feasible(g):
        M = assemble_bounding_lmi(mats, beta, g, sel, Q, K, H)
        return normalized_slack(M) <= cfg.slack_tol

    if not feasible(0.0):
        raise LmiError("certificate infeasible even at gamma = 0")
    hi = 1.0
    while feasible(hi):
        hi *= 2.0
        if hi >= 2.0 ** 60:
            return math.inf
    lo = 0.0 if hi == 1.0 else hi / 2.0
    while hi - lo > cfg.gamma_bisect_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def certificate_to_text(cert):
    """Serialize a certificate to a text document (17 significant digits)."""
    lines = ["gamma %.17g" % cert.gamma, "beta %.17g" % cert.beta]
    lines.append("Q " + " ".join("%.17g" % v for v in cert.Q.ravel()))
    lines.append("K " + " ".join("%.17g" % v for v in cert.K))
    lines.append("H " + " ".join("%.17g" % v for v in cert.H))
    return "\n".join(lines) + "\n"


def certificate_from_text(text):
    fields = {}
    for line in text.strip().splitlines():
        key, rest = line.split(" ", 1)
        fields[key] = np.array([float(v) for v in rest.split()])
    q = fields["Q"]
    nx = int(round(math.sqrt(len(q))))
    return CertificateMatrices(Q=q.reshape(nx, nx), K=fields["K"],
                               H=fields["H"], gamma=float(fields["gamma"][0]),
                               beta=float(fields["beta"][0]))
