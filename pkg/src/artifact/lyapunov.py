"""Lyapunov function evaluation and region-of-attraction estimation.

A certificate (Q, K, H) defines

    V(x) = 1/2 x'Qx + sum_e K_e Phi_e((Cx)_e)

where Phi_e is the integral of the normalized flow deviation
F_e(y) = sin(y + delta*_e + alpha_e) - sin(delta*_e + alpha_e), so that
V(0) = 0 and grad V = Qx + C'K F(Cx).  The invariant region estimate is
the sublevel set {V < V_min} intersected with the angle polytope
Delta(pi/2), where V_min is the minimum of V over the polytope boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


class LyapunovError(RuntimeError):
    pass


@dataclass(frozen=True)
class LyapunovFunction:
    cert: object            # CertificateMatrices
    mats: object            # SystemMatrices
    delta_star: np.ndarray  # |E| equilibrium edge angles

    @property
    def _sinstar(self):
        return np.sin(self.delta_star + self.mats.alphas)

    def flow(self, x):
        """F(Cx): normalized flow deviations."""
        y = self.mats.C @ x
        return np.sin(y + self.delta_star + self.mats.alphas) - self._sinstar

    def value(self, x):
        x = np.asarray(x, float)
        y = self.mats.C @ x
        arg = y + self.delta_star + self.mats.alphas
        # Phi_e(y) = cos(d*+a) - cos(y+d*+a) - y sin(d*+a)
        phi = (np.cos(self.delta_star + self.mats.alphas) - np.cos(arg)
               - y * self._sinstar)
        return float(0.5 * x @ self.cert.Q @ x + np.sum(self.cert.K * phi))

    def gradient(self, x):
        x = np.asarray(x, float)
        return self.cert.Q @ x + self.mats.C.T @ (self.cert.K * self.flow(x))

    def rhs_postfault(self, x):
        return self.mats.A @ x - self.mats.B @ self.flow(x)

    def rhs_faulton(self, x, sel):
        """Dynamics with the selected line removed, injections unchanged.

        Removing edge f deletes its full flow sin(delta_f + alpha_f), so in
        deviation coordinates the compact form gains B d (F_f + sin*_f).
        """
        d = sel.vector
        if d is None:
            raise LyapunovError("fault-on dynamics need a single-line selector")
        y = self.mats.C @ x
        full = np.sin(y + self.delta_star + self.mats.alphas)
        F = full - self._sinstar
        return self.mats.A @ x - self.mats.B @ (F - d * full)

    def vdot_postfault(self, x):
        return float(self.gradient(x) @ self.rhs_postfault(x))

    def vdot_faulton(self, x, sel):
        return float(self.gradient(x) @ self.rhs_faulton(x, sel))


@dataclass(frozen=True)
class RegionEstimate:
    vmin: float
    minimizer: np.ndarray   # angle deviations theta (length n) on the boundary
    face: tuple             # (edge index, +1 or -1)


def _reduced_quadratic(lyap):
    """Eliminate velocities: min over omega of 1/2 x'Qx at fixed angles.

    V is quadratic in the velocities, so the boundary minimization runs
    over angle deviations only, with Q replaced by its Schur complement.
    """
    Q = lyap.cert.Q
    m, n = lyap.mats.m, lyap.mats.n
    ang = np.r_[0:m, 2 * m:n + m]
    vel = np.r_[m:2 * m]
    Qaa = Q[np.ix_(ang, ang)]
    Qav = Q[np.ix_(ang, vel)]
    Qvv = Q[np.ix_(vel, vel)]
    return Qaa - Qav @ np.linalg.solve(Qvv, Qav.T)


def compute_vmin(lyap):
    """Minimize V over the boundary of Delta(pi/2).

    The boundary is the union of the 2|E| faces delta_e = +-pi/2; on each
    face the reduced problem (velocities eliminated in closed form) is
    solved with SLSQP from the least-norm point of the face.
    """
    E = lyap.mats.E
    ds = lyap.delta_star
    al = lyap.mats.alphas
    K = lyap.cert.K
    Qred = _reduced_quadratic(lyap)
    n = lyap.mats.n
    ne = lyap.mats.n_edges
    sinstar = np.sin(ds + al)

    def vred(th):
        y = E @ th
        arg = y + ds + al
        phi = np.cos(ds + al) - np.cos(arg) - y * sinstar
        return 0.5 * th @ Qred @ th + np.sum(K * phi)

    def gred(th):
        y = E @ th
        F = np.sin(y + ds + al) - sinstar
        return Qred @ th + E.T @ (K * F)

    box = [{"type": "ineq",
            "fun": lambda th: np.pi / 2 - np.abs(E @ th + ds),
            }]

    def feasible(th, e, target):
        y = E @ th
        return (abs(y[e] - target) <= 1e-8
                and np.max(np.abs(y + ds)) <= np.pi / 2 + 1e-6)

    best = None
    for e in range(ne):
        for sgn in (1.0, -1.0):
            target = sgn * np.pi / 2 - ds[e]
            cons = [{"type": "eq",
                     "fun": (lambda th, e=e, t=target: (E @ th)[e] - t),
                     "jac": (lambda th, e=e: E[e])}] + box
            th_face = E[e] * target / float(E[e] @ E[e])
            for th0 in (th_face, np.zeros(n)):
                r = minimize(vred, th0, jac=gred, method="SLSQP",
                             constraints=cons,
                             options={"maxiter": 300, "ftol": 1e-14})
                if not np.isfinite(r.fun) or not feasible(r.x, e, target):
                    continue
                if best is None or r.fun < best[0]:
                    best = (float(r.fun), r.x.copy(), (e, int(sgn)))
                break
    if best is None:
        raise LyapunovError("boundary minimization failed on every face")
    return RegionEstimate(vmin=best[0], minimizer=best[1], face=best[2])


def in_region(lyap, x, vmin):
    """Membership in the estimated invariant region {V < vmin} in Delta."""
    inside_box = float(np.max(np.abs(lyap.mats.C @ x + lyap.delta_star))) \
        < np.pi / 2
    return inside_box and lyap.value(x) < vmin
