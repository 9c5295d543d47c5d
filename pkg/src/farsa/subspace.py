"""Reduced-space quadratic model and the truncated CG solve for the Newton direction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import CompositeObjective, regularizer_gradient_on
from .exceptions import NonDifferentiableError, NotPositiveDefiniteError

RESIDUAL_TARGET = "residual_target"
STEP_TOO_BIG = "step_too_big"
DIMENSION_CAP = "dimension_cap"


@dataclass
class ReducedSystem:
    """Model ``m(d) = g^T d + 0.5 d^T H d`` over the coordinates ``idx``."""

    grad: np.ndarray
    hvp: Callable[[np.ndarray], np.ndarray]
    idx: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    def model(self, d) -> float:
        return float(self.grad @ d + 0.5 * d @ self.hvp(d))


@dataclass
class CgOutcome:
    direction: np.ndarray
    residual_norm: float
    iterations: int
    stop_reason: str
    model_value: float
    forcing_satisfied: bool  # ||Hd + g|| <= mu ||g||^q, recorded only


def reference_direction(sys: ReducedSystem) -> np.ndarray:
    """Minimiser of the model along ``-g``: ``-(||g||^2 / g^T H g) g``."""
    g = sys.grad
    gHg = float(g @ sys.hvp(g))
    if not gHg > 0:
        raise NotPositiveDefiniteError(f"g^T H g = {gHg:.3e} is not positive")
    return -(float(g @ g) / gHg) * g


def cg_direction(sys: ReducedSystem, grad_full_norm: float, opts) -> CgOutcome:
    """Linear CG on ``H d = -g`` from ``d = 0`` with three stopping rules.

    Stops at the first iterate that reaches the residual target, exceeds the
    step-size bound, or hits ``|I|`` iterations, in that precedence order.
    """
    g = sys.grad
    dim = sys.dim
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        raise ValueError("cg_direction needs a nonzero reduced gradient")
    target = max(
        min(opts.cg_target_factor * gnorm, gnorm**opts.cg_target_power),
        opts.cg_target_floor,
    )
    max_norm = opts.cg_trust_scale * min(1.0, grad_full_norm)

    d = np.zeros(dim)
    r = g.copy()  # residual H d + g
    p = -r
    rr = gnorm * gnorm
    j = 0
    reason = DIMENSION_CAP
    while True:
        Hp = sys.hvp(p)
        pHp = float(p @ Hp)
        if not pHp > 0:
            raise NotPositiveDefiniteError(f"p^T H p = {pHp:.3e} at CG iteration {j}")
        a = rr / pHp
        d += a * p
        r += a * Hp
        j += 1
        rr_new = float(r @ r)
        rnorm = np.sqrt(rr_new)
        if rnorm <= target:
            reason = RESIDUAL_TARGET
            break
        if np.linalg.norm(d) >= max_norm:
            reason = STEP_TOO_BIG
            break
        if j >= dim:
            reason = DIMENSION_CAP
            break
        p = -r + (rr_new / rr) * p
        rr = rr_new

    # m(d) = g^T d + 0.5 d^T (r - g) with r = H d + g
    gtd = float(g @ d)
    model = 0.5 * gtd + 0.5 * float(d @ r)
    if j > 1:
        # every CG iterate from 0 satisfies both conditions in exact arithmetic;
        # guard against rounding by falling back to the first iterate
        dR = reference_direction(sys)
        if gtd > float(g @ dR) or model > 0.0:
            d = dR
            r = sys.hvp(d) + g
            rnorm = float(np.linalg.norm(r))
            model = sys.model(d)
    return CgOutcome(
        direction=d,
        residual_norm=float(rnorm),
        iterations=j,
        stop_reason=reason,
        model_value=model,
        forcing_satisfied=bool(rnorm <= opts.mu * gnorm**opts.q),
    )


def group_hessian_operator(x, idx, partition):
    """Closure for ``v -> [hess r(x)]_{idx,idx} v`` (requires nonzero blocks)."""
    gid = partition.group_id[idx]
    xr = x[idx]
    k = partition.n_groups
    norms = np.sqrt(np.bincount(gid, weights=xr * xr, minlength=k))
    present = np.bincount(gid, minlength=k) > 0
    if np.any(norms[present] == 0.0):
        raise NonDifferentiableError("regularizer Hessian requested at a zero block")
    safe = np.where(present, norms, 1.0)
    lam = partition.weights
    c1 = (lam / safe)[gid]
    c3 = (lam / safe**3)[gid]

    def hvp(v):
        xv = np.bincount(gid, weights=xr * v, minlength=k)[gid]
        return c1 * v - c3 * xr * xv

    return hvp


def hessian_model(obj: CompositeObjective, x, iset, grad_F=None) -> ReducedSystem:
    """Reduced gradient of ``f + r`` and the Hessian-model product on ``iset``.

    ``iset`` is a group mask. The loss supplies its own (possibly regularised)
    curvature; the regularizer contributes its exact Hessian blocks.
    """
    part = obj.partition
    mask = part.group_mask(iset)
    idx = part.indices(mask)
    if grad_F is None:
        grad_F = obj.gradient(x) + regularizer_gradient_on(x, mask, part)
    elif np.any(part.norms(x)[mask] == 0.0):
        raise NonDifferentiableError("hessian_model requested at a zero block")
    loss_hvp = obj.loss.hessian_operator(x, idx)
    reg_hvp = group_hessian_operator(x, idx, part)

    def hvp(v):
        return loss_hvp(v) + reg_hvp(v)

    return ReducedSystem(grad=np.asarray(grad_F)[idx].copy(), hvp=hvp, idx=idx)
