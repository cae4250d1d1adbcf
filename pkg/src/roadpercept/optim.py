"""Damped Gauss-Newton (Levenberg-Marquardt) with finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    initial_cost: float
    converged: bool
    n_iters: int
    # Costs after each accepted step (monotone non-increasing).
    accepted_costs: list = field(default_factory=list)


def _fd_jacobian(fn, x, r0):
    """Central finite-difference Jacobian, step 1e-6 * max(1, |x_i|)."""
    n = x.size
    J = np.empty((r0.size, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        J[:, i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return J


def levenberg_marquardt(fn, x0, max_iters=200, lam0=1e-3, rel_tol=1e-10) -> LMResult:
    """Minimize 0.5 * ||fn(x)||^2.

    Damping lambda starts at ``lam0``, is multiplied by 10 on a rejected step
    and divided by 10 on an accepted one.  Accepted costs never increase;
    convergence is declared when the relative cost decrease of an accepted
    step drops below ``rel_tol``.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = np.asarray(fn(x), dtype=float)
    cost = float(r @ r)
    initial_cost = cost
    lam = lam0
    accepted = [cost]
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        J = _fd_jacobian(fn, x, r)
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(JtJ), 1e-12)
        stepped = False
        for _ in range(50):
            try:
                delta = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + delta
            r_new = np.asarray(fn(x_new), dtype=float)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                rel = (cost - cost_new) / max(cost, 1e-300)
                x, r, cost = x_new, r_new, cost_new
                accepted.append(cost)
                lam = max(lam / 10.0, 1e-15)
                stepped = True
                if rel < rel_tol:
                    converged = True
                break
            lam *= 10.0
        if not stepped:
            # No acceptable step at any damping: stationary for our purposes.
            converged = cost <= initial_cost * (1.0 + 1e-12)
            break
        if converged:
            break
    return LMResult(
        x=x,
        cost=cost,
        initial_cost=initial_cost,
        converged=converged,
        n_iters=it,
        accepted_costs=accepted,
    )
