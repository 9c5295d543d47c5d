"""Globalisation: projected backtracking along the Newton-CG direction and
backtracking along the proximal-gradient step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CompositeObjective
from .exceptions import LineSearchError

NEW_ZERO = "new_zero"
SUFF_DESCENT = "suff_descent"
SAME_ALPHA = "same_alpha"
DECREASE_ALPHA = "decrease_alpha"


@dataclass
class CgSearchResult:
    x_next: np.ndarray
    flag: str
    backtracks: int
    step_size: float
    smooth_change: float  # f(x_next) - f(x)
    objective_change: float  # F(x_next) - F(x)


@dataclass
class PgSearchResult:
    x_next: np.ndarray
    flag: str
    backtracks: int
    step_size: float
    smooth_change: float
    objective_change: float


def kill_radius(x_block, theta: float, rho: float) -> float:
    """``min(rho, sin(theta) * ||x_block||)``."""
    return min(float(rho), math.sin(theta) * float(np.linalg.norm(x_block)))


def first_intersection(x_block, d_block, rho_bar: float):
    """Smallest ``tau > 0`` with ``||x + tau d|| = rho_bar``, or ``None``.

    Assumes ``||x|| > rho_bar`` so both roots share a sign.
    """
    x_block = np.asarray(x_block, dtype=float)
    d_block = np.asarray(d_block, dtype=float)
    a = float(d_block @ d_block)
    if a == 0.0:
        return None
    b = 2.0 * float(x_block @ d_block)
    c = float(x_block @ x_block) - rho_bar * rho_bar
    if b >= 0.0:
        # roots have product c/a > 0 and sum -b/a <= 0: none positive
        return None
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    # larger-magnitude root first, the smaller one from the product of roots
    q = 0.5 * (-b + math.sqrt(disc))
    return c / q


def update_cg(x, d, iset, rho, obj: CompositeObjective, opts, grad_F=None,
              theta=None) -> CgSearchResult:
    """Projected search along a reduced-space direction ``d`` (zero outside ``iset``).

    Phase 1 tries step sizes at or above the first kill-ball crossing and zeroes
    every group whose ball has been reached; any trial that does not increase
    ``F`` is accepted with flag ``new_zero``. Phase 2 is Armijo backtracking on
    the unprojected ray and returns ``suff_descent``.

    ``rho`` holds per-group radii (indexed by group); ``grad_F`` is the gradient
    of ``f + r`` at ``x`` on the groups in ``iset``. Acceptance tests are
    applied to ``F(y) - F(x)`` computed directly rather than by subtraction.
    """
    part = obj.partition
    mask = part.group_mask(iset)
    theta = opts.theta if theta is None else theta
    change = obj.change_from(x)

    taus = np.full(part.n_groups, np.inf)
    for i in np.flatnonzero(mask):
        xi = part.gather(x, i)
        di = part.gather(d, i)
        rho_bar = kill_radius(xi, theta, rho[i])
        tau = first_intersection(xi, di, rho_bar)
        if tau is not None:
            taus[i] = tau
    tau_k = taus.min()
    tau_coord = taus[part.group_id]

    step = 1.0
    backtracks = 0
    while step >= tau_k:
        y = x + step * d
        y[tau_coord <= step] = 0.0
        df, dF = change(y)
        if dF <= 0.0:
            return CgSearchResult(y, NEW_ZERO, backtracks, step, df, dF)
        backtracks += 1
        if backtracks > opts.max_backtracks:
            raise LineSearchError("projected search exceeded the backtrack cap", backtracks)
        step *= opts.xi

    if grad_F is None:
        raise ValueError("grad_F is required for the sufficient-decrease phase")
    idx = part.indices(mask)
    dirder = float(grad_F[idx] @ d[idx])
    while True:
        y = x + step * d
        df, dF = change(y)
        if dF <= opts.eta * step * dirder:
            return CgSearchResult(y, SUFF_DESCENT, backtracks, step, df, dF)
        backtracks += 1
        if backtracks > opts.max_backtracks:
            raise LineSearchError("Armijo search exceeded the backtrack cap", backtracks)
        step *= opts.xi


def update_pg(x, s, alpha, iset, obj: CompositeObjective, opts) -> PgSearchResult:
    """Backtracking along ``P_I(s)`` with decrease ``eta xi^j ||P_I(s)||^2 / alpha``."""
    part = obj.partition
    direction = np.where(part.coord_mask(part.group_mask(iset)), s, 0.0)
    sq = float(direction @ direction)
    if sq == 0.0:
        raise ValueError("update_pg needs a nonzero step on the selected groups")
    change = obj.change_from(x)
    decrease = opts.eta * sq / alpha

    step = 1.0
    backtracks = 0
    while True:
        y = x + step * direction
        df, dF = change(y)
        if dF <= -step * decrease:
            break
        backtracks += 1
        if backtracks > opts.max_backtracks:
            raise LineSearchError("PG search exceeded the backtrack cap", backtracks)
        step *= opts.xi
    flag = SAME_ALPHA if backtracks == 0 else DECREASE_ALPHA
    return PgSearchResult(y, flag, backtracks, step, df, dF)
