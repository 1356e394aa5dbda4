"""Time-domain oracle: swing/load dynamics, RK4 integration, stability
classification, and true critical-clearing-time bisection.

States are deviation vectors x = [generator angle deviations, generator
velocities, load angle deviations] about a reference equilibrium; the
right-hand sides evaluate the true nonlinear dynamics (not the
sector-bounded compact form, although the two coincide exactly for
lossless models).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netmodel import build_system_matrices, incidence_matrix


class SimulationError(RuntimeError):
    pass


FAULT_ON = "fault-on"
POST_FAULT = "post-fault"

STABLE = "stable"
UNSTABLE = "unstable"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray     # (N,)
    states: np.ndarray    # (N, n+m)
    phases: tuple         # (label, n_samples) per segment, in order

    def concat(self, other):
        if self.states.shape[1] != other.states.shape[1]:
            raise SimulationError("state dimension changed between segments")
        return Trajectory(
            times=np.concatenate([self.times, other.times]),
            states=np.vstack([self.states, other.states]),
            phases=self.phases + other.phases)

    def phase_slice(self, label):
        start = 0
        for name, count in self.phases:
            if name == label:
                return slice(start, start + count)
            start += count
        return None


@dataclass(frozen=True)
class StabilityVerdict:
    kind: str             # stable | unstable | undetermined
    final_deviation: float
    escaped: bool


from functools import lru_cache


@lru_cache(maxsize=64)
def _sim_data(model):
    """Static per-model arrays for the right-hand-side evaluations."""
    return dict(
        m=model.m, n=model.n,
        E=incidence_matrix(model),
        S=model.couplings, al=model.alphas,
        P=np.array([b.power for b in model.state_buses]),
        M1=np.array([b.inertia for b in model.generators]),
        D1=np.array([b.damping for b in model.generators]),
        D2=np.array([b.damping for b in model.loads]))


def _unpack(model, eq, x):
    """Absolute bus angles and generator velocities from a deviation state."""
    m, n = model.m, model.n
    theta = np.empty(n)
    theta[:m] = x[:m]
    theta[m:] = x[2 * m:]
    return eq.angles + theta, x[m:2 * m]


def _rhs(model, eq, x, mask):
    d = _sim_data(model)
    m, n = d["m"], d["n"]
    theta = np.concatenate([x[:m], x[2 * m:]])
    omega = x[m:2 * m]
    delta = eq.angles + theta
    E = d["E"]
    flow = E.T @ (mask * d["S"] * np.sin(E @ delta + d["al"]))
    P = d["P"]
    dx = np.empty(n + m)
    dx[:m] = omega
    dx[m:2 * m] = (P[:m] - flow[:m] - d["D1"] * omega) / d["M1"]
    if n > m:
        dx[2 * m:] = (P[m:] - flow[m:]) / d["D2"]
    return dx


def rhs_postfault(model, eq, x):
    """True nonlinear right-hand side with the full line set."""
    return _rhs(model, eq, np.asarray(x, float),
                np.ones(len(model.edges)))


def rhs_faulton(model, eq, line, x):
    """Right-hand side with one line's sine coupling removed.

    Injections are unchanged during the fault; pass a model with
    different injections to represent a pre-fault operating point.
    """
    mask = np.ones(len(model.edges))
    mask[model.edge_index(line)] = 0.0
    return _rhs(model, eq, np.asarray(x, float), mask)


def integrate(rhs, x0, horizon, dt, t0=0.0, phase=POST_FAULT, stop=None):
    """Classical fixed-step RK4.

    `stop` is an optional predicate on the state; integration halts after
    the first sample where it returns True (the sample is kept).
    """
    if dt <= 0 or horizon < dt:
        raise SimulationError("need dt > 0 and horizon >= dt")
    nsteps = int(round(horizon / dt))
    x = np.asarray(x0, float).copy()
    states = np.empty((nsteps + 1, len(x)))
    states[0] = x
    kept = nsteps
    for i in range(nsteps):
        k1 = rhs(x)
        k2 = rhs(x + dt / 2 * k1)
        k3 = rhs(x + dt / 2 * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationError(
                "non-finite state at t = {:.6f}".format(t0 + (i + 1) * dt))
        states[i + 1] = x
        if stop is not None and stop(x):
            kept = i + 1
            break
    states = states[:kept + 1]
    times = t0 + dt * np.arange(kept + 1)
    return Trajectory(times=times, states=states,
                      phases=((phase, kept + 1),))


def _edge_deviation(model, eq_post, states):
    """Per-sample max |delta_kj - delta*_kj| over edges (gauge-invariant)."""
    E = incidence_matrix(model)
    m = model.m
    ang = np.hstack([states[:, :m], states[:, 2 * m:]])
    return np.max(np.abs(ang @ E.T), axis=1)


def classify(traj, model, eq_post, tol=1e-3, escape_bound=np.pi):
    """Stability verdict for the post-fault segment of a trajectory.

    Stable: the max angle/velocity deviation over the last 10% of the
    segment is within `tol` and no edge angle ever deviated from the
    equilibrium by more than the escape bound.  Unstable: escape, or the
    deviation still growing at the end of the horizon.
    """
    sl = traj.phase_slice(POST_FAULT)
    states = traj.states[sl] if sl is not None else traj.states
    m = model.m
    edge_dev = _edge_deviation(model, eq_post, states)
    vel_dev = np.max(np.abs(states[:, m:2 * m]), axis=1) if m else \
        np.zeros(len(states))
    dev = np.maximum(edge_dev, vel_dev)
    escaped = bool(np.any(edge_dev > escape_bound))
    n_tail = max(1, len(dev) // 10)
    tail = float(np.max(dev[-n_tail:]))
    if escaped:
        return StabilityVerdict(kind=UNSTABLE, final_deviation=tail,
                                escaped=True)
    if tail <= tol:
        return StabilityVerdict(kind=STABLE, final_deviation=tail,
                                escaped=False)
    prev = float(np.max(dev[-2 * n_tail:-n_tail])) if len(dev) >= 2 * n_tail \
        else tail
    kind = UNSTABLE if tail > prev else UNDETERMINED
    return StabilityVerdict(kind=kind, final_deviation=tail, escaped=False)


def run_fault_scenario(model, eq_post, line, clearing_time, dt=1e-3,
                       horizon=20.0, model_pre=None, x0=None,
                       escape_bound=np.pi):
    """Fault-on for `clearing_time`, then post-fault for `horizon`.

    The initial state defaults to the origin (the pre-fault operating
    point when injections are unchanged); `model_pre`, if given, supplies
    the injections active during the fault, with `x0` carrying the
    pre-fault equilibrium offset.
    """
    nx = model.n + model.m
    x = np.zeros(nx) if x0 is None else np.asarray(x0, float)
    fault_model = model_pre if model_pre is not None else model
    segs = []
    if clearing_time >= dt:
        segs.append(integrate(
            lambda s: rhs_faulton(fault_model, eq_post, line, s),
            x, clearing_time, dt, phase=FAULT_ON))
        x = segs[-1].states[-1]

    E = incidence_matrix(model)
    m = model.m

    def escaped(s):
        ang = np.concatenate([s[:m], s[2 * m:]])
        return np.max(np.abs(E @ ang)) > escape_bound

    post = integrate(lambda s: rhs_postfault(model, eq_post, s),
                     x, horizon, dt,
                     t0=(segs[-1].times[-1] if segs else 0.0),
                     phase=POST_FAULT, stop=escaped)
    traj = post if not segs else segs[0].concat(post)
    return traj


def true_cct(model, eq, line, bracket=None, bisect_tol=1e-3, dt=1e-3,
             horizon=20.0, cap=64.0, model_pre=None, x0=None):
    """Bisect the critical clearing time against the simulation oracle.

    Returns (tau, "ok"), or (cap, "cct-at-least-cap") when no unstable
    clearing time exists below the doubling cap.  A stable probe above a
    previously unstable one aborts with a diagnostic, since bisection
    presumes monotone instability in the clearing time.
    """
    history = []

    def probe(tau):
        traj = run_fault_scenario(model, eq, line, tau, dt=dt,
                                  horizon=horizon, model_pre=model_pre,
                                  x0=x0)
        stable = classify(traj, model, eq).kind == STABLE
        for t_other, s_other in history:
            if stable and not s_other and tau > t_other:
                raise SimulationError(
                    "non-monotone instability: stable at {:.4f} but "
                    "unstable at {:.4f}".format(tau, t_other))
            if not stable and s_other and tau < t_other:
                raise SimulationError(
                    "non-monotone instability: unstable at {:.4f} but "
                    "stable at {:.4f}".format(tau, t_other))
        history.append((tau, stable))
        return stable

    if bracket is not None:
        lo, hi = bracket
        if not probe(lo):
            raise SimulationError("bracket lower end is not stable")
        if probe(hi):
            raise SimulationError("bracket upper end is not unstable")
    else:
        lo = 0.0
        hi = max(dt, bisect_tol)
        while probe(hi):
            lo = hi
            hi *= 2.0
            if hi > cap:
                return float(cap), "cct-at-least-cap"
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), "ok"


def trajectory_csv(traj, model, eq):
    """CSV export `t,delta_1..delta_n,omega_1..omega_m` (absolute angles)."""
    m, n = model.m, model.n
    header = ["t"]
    header += ["delta_{}".format(b.id) for b in model.state_buses]
    header += ["omega_{}".format(b.id) for b in model.generators]
    rows = [",".join(header)]
    for t, x in zip(traj.times, traj.states):
        delta, omega = _unpack(model, eq, x)
        vals = np.concatenate([[t], delta, omega])
        rows.append(",".join("%.17g" % v for v in vals))
    return "\n".join(rows) + "\n"


def compact_form_rhs(model, eq, x):
    """A x - B F(C x) with the unscaled flow deviation (cross-check aid)."""
    mats = build_system_matrices(model)
    ds = eq.edge_angles(model)
    y = mats.C @ x
    F = np.sin(y + ds + mats.alphas) - np.sin(ds + mats.alphas)
    return mats.A @ x - mats.B @ F
