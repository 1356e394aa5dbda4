"""Equilibrium solve and sector-bound computation.

The stable equilibrium delta* solves the power-flow-like equations

    sum_j a_kj sin(delta_k - delta_j) = P_k

over the non-infinite buses.  Because only angle differences enter, one
reference is removed: the infinite bus (angle 0) when present, otherwise
the highest-id bus is pinned to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netmodel import incidence_matrix

LOSSLESS = "lossless"
LOSSY = "lossy"
FLUCTUATION = "voltage-fluctuation"


class EquilibriumError(RuntimeError):
    pass


@dataclass(frozen=True)
class Equilibrium:
    """Solved operating angles over the model's non-infinite buses."""

    angles: np.ndarray   # length n, model bus order, reference pinned to 0
    gap: float           # max over edges of |delta*_kj|
    residual: float      # max-norm flow-equation residual

    def edge_angles(self, model):
        E = incidence_matrix(model)
        return E @ self.angles


@dataclass(frozen=True)
class SectorBound:
    beta: float
    lam: float
    mode: str


def _flow_residual(model, E, S, alphas, angles, powers, free):
    flows = E.T @ (S * np.sin(E @ angles + alphas))
    return flows[free] - powers[free]


def solve_sep(model, guess=None, tol=1e-10, max_iter=50):
    """Newton solve of the sine power-flow map from a flat start.

    Lossy networks are supported only in the single-line scalar case,
    where the arcsine solution is exact.
    """
    n = model.n
    E = incidence_matrix(model)
    S = model.couplings
    alphas = model.alphas
    powers = np.array([b.power for b in model.state_buses])

    if model.lossy:
        if n != 1 or len(model.edges) != 1:
            raise EquilibriumError(
                "lossy equilibrium solve supports only the scalar "
                "single-line case")
        # S * sin(e * delta + alpha) = P with e = +-1 from the orientation
        e = E[0, 0]
        arg = powers[0] / S[0]
        if abs(arg) > 1:
            raise EquilibriumError("no equilibrium: |P| exceeds coupling")
        delta = e * (math.asin(arg) - alphas[0])
        angles = np.array([delta])
        res = abs(S[0] * math.sin(E[0, 0] * delta + alphas[0]) - powers[0])
        gap = abs(E[0, 0] * delta)
        return Equilibrium(angles=angles, gap=gap, residual=res)

    if model.infinite_buses:
        free = list(range(n))
    else:
        # pin the highest-id state bus
        pin_id = max(b.id for b in model.state_buses)
        pin = [i for i, b in enumerate(model.state_buses) if b.id == pin_id][0]
        free = [i for i in range(n) if i != pin]

    angles = np.zeros(n) if guess is None else np.asarray(guess, float).copy()
    for _ in range(max_iter):
        r = _flow_residual(model, E, S, alphas, angles, powers, free)
        if np.max(np.abs(r)) <= tol:
            break
        # Jacobian of the flow map restricted to free buses
        W = S * np.cos(E @ angles + alphas)
        J = (E.T * W) @ E
        J = J[np.ix_(free, free)]
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError("singular Jacobian") from exc
        angles[free] -= step
        if np.max(np.abs(E @ angles)) >= np.pi / 2:
            raise EquilibriumError(
                "Newton iterate escaped the polytope Delta(pi/2)")
    else:
        raise EquilibriumError(
            "Newton did not converge within {} iterations".format(max_iter))

    res = np.max(np.abs(_flow_residual(model, E, S, alphas, angles,
                                       powers, free)))
    gap = float(np.max(np.abs(E @ angles)))
    if gap >= np.pi / 2:
        raise EquilibriumError("equilibrium escaped Delta(pi/2)")
    return Equilibrium(angles=angles, gap=gap, residual=float(res))


def angle_gap(eq, model, nominal=None):
    """Maximum edge angle gap, optionally rounded up to a nominal value."""
    gap = float(np.max(np.abs(eq.edge_angles(model)))) if model.edges else 0.0
    if nominal is not None:
        if nominal < gap - 1e-12:
            raise EquilibriumError(
                "nominal gap {} below the computed gap {}".format(nominal, gap))
        return float(nominal)
    return gap


def compute_beta(model, lam, mode=None):
    """Sector slope beta of the sine nonlinearity on Delta(lambda)."""
    if lam >= np.pi / 2:
        raise EquilibriumError("lambda must be < pi/2")
    if mode is None:
        if model.fluctuation_rho is not None:
            mode = FLUCTUATION
        elif model.lossy:
            mode = LOSSY
        else:
            mode = LOSSLESS
    if mode == LOSSY:
        alphas = model.alphas
        beta = min((math.sin(np.pi / 2 + a) - math.sin(lam + a))
                   / (np.pi / 2 - lam) for a in alphas)
    else:
        beta = (1.0 - math.sin(lam)) / (np.pi / 2 - lam)
        if mode == FLUCTUATION:
            rho = model.fluctuation_rho if model.fluctuation_rho is not None else 0.1
            beta *= ((1.0 - rho) / (1.0 + rho)) ** 2
    if beta <= 0:
        raise EquilibriumError("non-positive sector slope")
    return SectorBound(beta=float(beta), lam=float(lam), mode=mode)


def flow_deviation(delta, delta_star, alpha=0.0, scale=1.0):
    """Normalized flow deviation f_kj of one edge.

    Lossless lines have alpha = 0; under voltage fluctuation the actual
    coupling is `scale` times the nominal upper bound, scale in
    [(1-rho)^2/(1+rho)^2, 1].
    """
    return scale * (math.sin(delta + alpha) - math.sin(delta_star + alpha))


def sector_gap(beta, delta, delta_star, alpha=0.0, scale=1.0):
    """g = (f - d)(f - beta d) with d = delta - delta*; g <= 0 on the sector."""
    f = flow_deviation(delta, delta_star, alpha, scale)
    d = delta - delta_star
    return (f - d) * (f - beta * d)


def pre_fault_offset(eq_pre, eq_post, model):
    """State vector x_pre = delta*_pre - delta*_post in the x layout."""
    if eq_pre.angles.shape != eq_post.angles.shape:
        raise EquilibriumError("equilibria have mismatched dimensions")
    diff = eq_pre.angles - eq_post.angles
    m, n = model.m, model.n
    x = np.zeros(n + m)
    x[:m] = diff[:m]
    x[2 * m:] = diff[m:]
    return x
