"""Truncated stochastic characteristics and their weights.

For each Brownian column l the two discrete characteristics
x + lam dt b +- sqrt(p lam dt) sigma_l are stopped at the first exit from the
domain (lam < 1) and the weights are rebalanced so the scheme stays
consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LAMBDA_MIN = 1e-14


@dataclass(frozen=True)
class ColumnFoot:
    lam_plus: float
    lam_minus: float
    foot_plus: np.ndarray
    foot_minus: np.ndarray
    time_plus: float
    time_minus: float
    gamma_plus: float
    gamma_minus: float
    tau: float

    @property
    def exited_plus(self):
        return self.lam_plus < 1.0

    @property
    def exited_minus(self):
        return self.lam_minus < 1.0


@dataclass(frozen=True)
class TruncatedFoot:
    columns: list
    pi: np.ndarray
    tau: float


def branch_weights(lam_plus, lam_minus, dt):
    """(gamma+, gamma-, tau_l) from the exit fractions (arrays or floats)."""
    lp = np.maximum(lam_plus, LAMBDA_MIN)
    lm = np.maximum(lam_minus, LAMBDA_MIN)
    rp, rm = np.sqrt(lp), np.sqrt(lm)
    gp = rm / (rp + rm)
    gm = rp / (rp + rm)
    return gp, gm, dt * rp * rm


def combine_columns(taus, dt=None):
    """Column weights pi_l and overall tau from the per-column tau_l.

    Works on the last axis. Uses reciprocals w_l = 1/tau_l, which is the
    product formula divided through by prod(tau_l).
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(~(taus > 0)):
        raise ValueError("every tau_l must be positive")
    if dt is not None and np.any(taus > dt * (1 + 1e-12)):
        raise ValueError("tau_l cannot exceed dt")
    p = taus.shape[-1]
    if p == 1:
        return np.ones_like(taus), taus[..., 0].copy()
    w = 1.0 / taus
    total = w.sum(axis=-1, keepdims=True)
    return w / total, p / total[..., 0]


def column_foot(domain, x, t_k, dt, b, sigma, p=1) -> ColumnFoot:
    x = np.asarray(x, dtype=float).reshape(domain.dim)
    b = np.asarray(b, dtype=float).reshape(domain.dim)
    sigma = np.asarray(sigma, dtype=float).reshape(domain.dim)
    if not domain.inside(x[None])[0]:
        raise ValueError("column_foot needs an interior point")
    if not dt > 0:
        raise ValueError("dt must be positive")
    lam, feet = [], []
    scale = math.sqrt(p * dt)
    for sign in (1.0, -1.0):
        s, P = domain.exit_fractions(x[None], dt * b[None], sign * scale * sigma[None])
        if np.isfinite(s[0]):
            lam.append(max(s[0] ** 2, LAMBDA_MIN))
            feet.append(P[0])
        else:
            lam.append(1.0)
            feet.append(x + dt * b + sign * scale * sigma)
    gp, gm, tau = branch_weights(lam[0], lam[1], dt)
    return ColumnFoot(lam[0], lam[1], feet[0], feet[1],
                      t_k + lam[0] * dt, t_k + lam[1] * dt,
                      float(gp), float(gm), float(tau))


def truncated_foot(domain, x, t_k, dt, b, sigmas) -> TruncatedFoot:
    """All columns at one point; sigmas has shape (d, p)."""
    sigmas = np.asarray(sigmas, dtype=float).reshape(domain.dim, -1)
    p = sigmas.shape[1]
    cols = [column_foot(domain, x, t_k, dt, b, sigmas[:, l], p) for l in range(p)]
    pi, tau = combine_columns(np.array([c.tau for c in cols]), dt)
    return TruncatedFoot(cols, pi, float(tau))


@dataclass
class FootBatch:
    """Vectorized feet for n points: arrays indexed (n, p, branch)."""

    lam: np.ndarray      # (n, p, 2)
    feet: np.ndarray     # (n, p, 2, d)
    gamma: np.ndarray    # (n, p, 2)
    tau_col: np.ndarray  # (n, p)
    pi: np.ndarray       # (n, p)
    tau: np.ndarray      # (n,)


def truncated_feet(domain, X, dt, B, S) -> FootBatch:
    """Feet for many points at once. B is (n, d), S is (n, d, p).

    Branch 0 is '+', branch 1 is '-'. Unexited feet are computed exactly as
    x + dt b +- sqrt(p dt) sigma_l, exited ones are snapped onto the boundary.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    p = S.shape[2]
    scale = math.sqrt(p * dt)
    U = dt * B
    drift_foot = X + U
    lam = np.ones((n, p, 2))
    feet = np.empty((n, p, 2, d))
    for l in range(p):
        W = scale * S[:, :, l]
        zero = not np.any(W)
        for k, sign in enumerate((1.0, -1.0)):
            if zero and k == 1:
                lam[:, l, 1] = lam[:, l, 0]
                feet[:, l, 1] = feet[:, l, 0]
                continue
            s, P = domain.exit_fractions(X, U, sign * W)
            ex = np.isfinite(s)
            lam[ex, l, k] = np.maximum(s[ex] ** 2, LAMBDA_MIN)
            feet[:, l, k] = drift_foot + sign * W
            feet[ex, l, k] = P[ex]
    gp, gm, tau_col = branch_weights(lam[..., 0], lam[..., 1], dt)
    pi, tau = combine_columns(tau_col)
    return FootBatch(lam, feet, np.stack([gp, gm], axis=-1), tau_col, pi, tau)
