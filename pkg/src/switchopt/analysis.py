"""Diagnostics that mirror the convergence argument.

The composite energy V decomposes into a primal part (distance to the
optimum plus distance of the noise-free pair sum), a quadratic multiplier
part, a divergence part for the inequality multipliers, and a quadratic
part for the equality multipliers.  The divergence part uses the potential
whose derivative cancels the (1 + eta*lambda) factor of the multiplier
flow, so the energy dissipates along trajectories; for multipliers that are
active at the optimum this is the x*ln(x) Bregman divergence with the
equilibrium value as the first argument.

The relaxed Lagrangian adds a consensus quadratic to the raw Lagrangian,
weighted by a coupling/noise constant: hbar = (c - c^2 kappa^2 / 2) / 2 for
a fixed topology and hbar = (c pi_min - (3/2) c^2 kappa^2 pi_max) / 2 under
switching.  Its saddle structure around the certified optimum is what the
sampled inequality checks exercise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import StationaryDist
from .dynamics import Equilibrium, SystemState, Trajectory
from .problem import KktCertificate, Problem, total_cost

__all__ = [
    "LyapunovReport",
    "bregman_divergence",
    "omega_from_certificate",
    "lyapunov",
    "hbar_fixed",
    "hbar_switching",
    "lagrangian_phi",
    "convergence_metrics",
    "saddle_point_samples",
    "generator_bound_series",
]


def bregman_divergence(a: float, b: float) -> float:
    """D(a, b) = a*ln(a/b) - a + b from the potential x*ln(x); nonnegative,
    zero exactly at a = b."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"divergence needs positive arguments, got {a}, {b}")
    return a * math.log(a / b) - a + b


def omega_from_certificate(cert: KktCertificate, tol: float = 1e-8) -> frozenset:
    """Stacked inequality indices whose equilibrium multiplier is positive."""
    return frozenset(
        int(k) for k, v in enumerate(cert.lambda_star) if v > tol
    )


@dataclass
class LyapunovReport:
    V1: float
    V2: float
    V3: float
    V4: float
    V: float
    bregman_terms: dict
    consensus_error: float
    opt_error: float


def lyapunov(
    state: SystemState, eq: Equilibrium, eta, omega: frozenset
) -> LyapunovReport:
    """Evaluate the composite energy at one state.

    ``omega`` selects the inequality indices treated with the divergence
    potential (positive equilibrium multiplier); the rest contribute plain
    squared deviations.  Multipliers in omega must be positive here.
    """
    r = state.lam.shape[0]
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 0:
        eta = np.full(r, float(eta))

    dx = state.x - eq.x
    dpair = state.pair - eq.pair
    V1 = 0.5 * float(np.sum(dx * dx)) + 0.5 * float(np.sum(dpair * dpair))
    dlam = state.lam - eq.lam
    V2 = 0.5 * float(np.sum(eta * dlam * dlam))

    V3 = 0.0
    bregman = {}
    for k in range(r):
        lam_k = float(state.lam[k])
        lam_star = float(eq.lam[k])
        if k in omega:
            if lam_k <= 0.0:
                raise ValueError(
                    f"multiplier {k} must be positive to evaluate the "
                    f"divergence term, got {lam_k}"
                )
            V3 += (lam_k - lam_star) - lam_star * (
                math.log(lam_k) - math.log(lam_star)
            )
            bregman[k] = bregman_divergence(lam_k, lam_star)
        else:
            V3 += (lam_k - lam_star) ** 2
    dnu = state.nu - eq.nu
    V4 = 0.5 * float(np.sum(dnu * dnu))

    mean = state.x.mean(axis=0)
    consensus = float(np.linalg.norm(state.x - mean[None, :]))
    opt = float(np.linalg.norm(state.x - eq.x, axis=1).max())
    return LyapunovReport(
        V1=V1, V2=V2, V3=V3, V4=V4, V=V1 + V2 + V3 + V4,
        bregman_terms=bregman, consensus_error=consensus, opt_error=opt,
    )


def hbar_fixed(c: float, kappa: float) -> float:
    return 0.5 * (c - 0.5 * c**2 * kappa**2)


def hbar_switching(c: float, kappa: float, pi: StationaryDist) -> float:
    return 0.5 * (c * pi.p_min - 1.5 * c**2 * kappa**2 * pi.p_max)


def lagrangian_phi(
    state: SystemState,
    problem: Problem,
    x_star,
    hbar: float,
    L: np.ndarray,
) -> float:
    """Relaxed Lagrangian at a stacked state.

    The consensus quadratic uses the (N x N) Laplacian ``L`` applied
    blockwise; callers pick the fixed-topology constant and Laplacian or the
    switching variants (summed Laplacian, switching hbar).  The value is
    relative to the certified optimum through the (x - x*)' theta term, so a
    certificate is required before any evaluation.
    """
    x = state.x
    x_star = np.asarray(x_star, dtype=float)
    theta = state.theta
    value = 0.0
    for i, a in enumerate(problem.agents):
        value += a.f.value(tuple(x[i]))
    dx = x - x_star[None, :]
    value += float(np.sum(dx * theta))
    value += hbar * float(np.einsum("ij,ik,jk->", L, x, x))
    pos = 0
    for i, a in enumerate(problem.agents):
        for e in a.g:
            value += state.lam[pos] * e.value(tuple(x[i]))
            pos += 1
    pos = 0
    for i, a in enumerate(problem.agents):
        for e in a.h:
            value += state.nu[pos] * e.value(tuple(x[i]))
            pos += 1
    return float(value)


def convergence_metrics(
    trajectory: Trajectory,
    eq: Equilibrium,
    problem: Problem,
    eta,
    omega: frozenset,
) -> dict:
    """Per-sample series: energy split, consensus error, distance to the
    optimum, and the cost gap of the agent mean."""
    p_star = total_cost(problem, tuple(eq.x[0]))
    K = len(trajectory.times)
    out = {
        "t": np.array(trajectory.times),
        "V": np.empty(K),
        "V1": np.empty(K),
        "V2": np.empty(K),
        "V3": np.empty(K),
        "V4": np.empty(K),
        "consensus_error": np.empty(K),
        "opt_error": np.empty(K),
        "cost_gap": np.empty(K),
    }
    for k in range(K):
        state = SystemState(
            trajectory.x[k], trajectory.theta[k],
            trajectory.lam[k], trajectory.nu[k], t=trajectory.times[k],
        )
        rep = lyapunov(state, eq, eta, omega)
        out["V"][k] = rep.V
        out["V1"][k] = rep.V1
        out["V2"][k] = rep.V2
        out["V3"][k] = rep.V3
        out["V4"][k] = rep.V4
        out["consensus_error"][k] = rep.consensus_error
        out["opt_error"][k] = rep.opt_error
        out["cost_gap"][k] = total_cost(problem, trajectory.x[k].mean(axis=0)) - p_star
    return out


def saddle_point_samples(
    problem: Problem,
    eq: Equilibrium,
    hbar: float,
    L: np.ndarray,
    n_samples: int,
    rng,
    scale: float = 1.0,
) -> dict:
    """Sampled two-sided saddle inequality around the equilibrium.

    Left side perturbs (theta, lambda >= 0, nu) at the optimal x; right side
    perturbs x at the optimal multipliers.  Reports the worst slacks; both
    should be nonnegative up to roundoff.
    """
    x_star = eq.x[0]
    center = eq.as_state()
    phi_center = lagrangian_phi(center, problem, x_star, hbar, L)
    min_left = math.inf
    min_right = math.inf
    for _ in range(n_samples):
        theta = eq.theta + rng.normal(0.0, scale, eq.theta.shape)
        lam = np.abs(eq.lam + rng.normal(0.0, scale, eq.lam.shape))
        nu = eq.nu + rng.normal(0.0, scale, eq.nu.shape)
        left_state = SystemState(eq.x, theta, lam, nu)
        phi_left = lagrangian_phi(left_state, problem, x_star, hbar, L)
        min_left = min(min_left, phi_center - phi_left)

        x = eq.x + rng.normal(0.0, scale, eq.x.shape)
        right_state = SystemState(x, eq.theta, eq.lam, eq.nu)
        phi_right = lagrangian_phi(right_state, problem, x_star, hbar, L)
        min_right = min(min_right, phi_right - phi_center)
    return {
        "n_samples": n_samples,
        "phi_center": phi_center,
        "min_left_slack": min_left,
        "min_right_slack": min_right,
    }


def generator_bound_series(
    trajectories: list[Trajectory],
    eq: Equilibrium,
    problem: Problem,
    eta,
    omega: frozenset,
    hbar: float,
    L: np.ndarray,
    lam2: float,
) -> dict:
    """Ensemble estimate of the energy dissipation against its bound.

    The left side is a finite difference of the ensemble-mean energy; the
    right side averages, over members, the saddle gap minus the coercive
    quadratic.  Both are Monte-Carlo estimates with visible noise, so the
    series is reported for inspection, never asserted.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    times = trajectories[0].times
    K = len(times)
    V = np.zeros((len(trajectories), K))
    rhs = np.zeros((len(trajectories), K))
    x_star = eq.x[0]
    for m, traj in enumerate(trajectories):
        for k in range(K):
            state = SystemState(
                traj.x[k], traj.theta[k], traj.lam[k], traj.nu[k],
                t=traj.times[k],
            )
            V[m, k] = lyapunov(state, eq, eta, omega).V
            left_state = SystemState(eq.x, traj.theta[k], traj.lam[k], traj.nu[k])
            right_state = SystemState(traj.x[k], eq.theta, eq.lam, eq.nu)
            gap = lagrangian_phi(
                left_state, problem, x_star, hbar, L
            ) - lagrangian_phi(right_state, problem, x_star, hbar, L)
            dx2 = float(np.sum((traj.x[k] - eq.x) ** 2))
            rhs[m, k] = gap - (hbar * lam2 - 1.0) * dx2
    mean_V = V.mean(axis=0)
    dt = np.diff(times)
    dissipation = np.diff(mean_V) / dt
    return {
        "t": times,
        "mean_V": mean_V,
        "dissipation_estimate": dissipation,
        "bound_mean": rhs.mean(axis=0),
        "n_members": len(trajectories),
    }
