"""Space decomposition: which groups go to the Newton-CG subspace and which to PG.

Group-index sets are boolean masks of length ``n_groups``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CompositeObjective, IterateState, objective_gradient_norms


@dataclass
class DecompositionResult:
    icg_bar: np.ndarray
    ismall: np.ndarray
    icg: np.ndarray
    ipg: np.ndarray
    chi_cg: float
    chi_pg: float
    rho: np.ndarray  # per group; nan outside icg
    grad_F: np.ndarray  # grad of f + r, zero on groups with zero x-block
    grad_norms: np.ndarray  # per-group ||grad_{G_i}(f + r)||, nan on zero groups
    x_norms: np.ndarray
    step_norms: np.ndarray


def _group_quantities(state: IterateState, obj: CompositeObjective):
    part = obj.partition
    x_norms = part.norms(state.x)
    grad_F, grad_norms = objective_gradient_norms(state.x, state.grad_f, part, x_norms)
    return x_norms, grad_F, grad_norms


def candidate_groups(state: IterateState, obj: CompositeObjective, kappa1: float, _cache=None):
    """Groups with ``x_i != 0``, ``(x + s)_i != 0`` and ``||x_i|| >= kappa1 ||grad_i F||``."""
    part = obj.partition
    x_norms, _, grad_norms = _cache or _group_quantities(state, obj)
    nonzero_x = x_norms > 0.0
    nonzero_t = ~part.zero_groups(state.x + state.pg_step)
    cand = nonzero_x & nonzero_t
    # grad_norms is nan on zero groups; those are already excluded
    cand[cand] = x_norms[cand] >= kappa1 * grad_norms[cand]
    return cand


def _kappa2_hat(obj, candidates, kappa2, rescale):
    part = obj.partition
    if not rescale:
        return np.full(part.n_groups, float(kappa2))
    dim = int(part.sizes[candidates].sum())
    if dim == 0:
        return np.full(part.n_groups, float(kappa2))
    return kappa2 * part.sizes / dim


def small_groups(candidates, state: IterateState, obj: CompositeObjective, kappa2, p,
                 rescale=False, _cache=None):
    """Candidates whose block norm is below ``kappa2_hat * ||grad_{cand} F||^p``."""
    candidates = np.asarray(candidates, dtype=bool)
    x_norms, _, grad_norms = _cache or _group_quantities(state, obj)
    small = np.zeros_like(candidates)
    if not candidates.any():
        return small
    gnorm = float(np.sqrt(np.sum(grad_norms[candidates] ** 2)))
    k2 = _kappa2_hat(obj, candidates, kappa2, rescale)
    small[candidates] = x_norms[candidates] < k2[candidates] * gnorm**p
    return small


def decompose(state: IterateState, obj: CompositeObjective, opts) -> DecompositionResult:
    """Index sets, optimality measures and per-group radii for one iteration.

    Fills ``state.icg``, ``state.ipg``, ``state.chi_cg`` and ``state.chi_pg``.
    """
    part = obj.partition
    cache = _group_quantities(state, obj)
    x_norms, grad_F, grad_norms = cache
    cand = candidate_groups(state, obj, opts.kappa1, _cache=cache)
    small = small_groups(cand, state, obj, opts.kappa2, opts.p, opts.kappa2_rescale, _cache=cache)
    icg = cand & ~small
    ipg = ~icg

    step_sq = part.sum_squares(state.pg_step)
    chi_cg = float(np.sqrt(step_sq[icg].sum()))
    chi_pg = float(np.sqrt(step_sq[ipg].sum()))

    rho = np.full(part.n_groups, np.nan)
    if icg.any():
        g_icg = float(np.sqrt(np.sum(grad_norms[icg] ** 2)))
        k2 = _kappa2_hat(obj, cand, opts.kappa2, opts.kappa2_rescale)
        rho[icg] = np.maximum(opts.kappa1 * grad_norms[icg], k2[icg] * g_icg**opts.p)

    state.icg, state.ipg = icg, ipg
    state.chi_cg, state.chi_pg = chi_cg, chi_pg
    return DecompositionResult(
        icg_bar=cand, ismall=small, icg=icg, ipg=ipg, chi_cg=chi_cg, chi_pg=chi_pg,
        rho=rho, grad_F=grad_F, grad_norms=grad_norms, x_norms=x_norms,
        step_norms=np.sqrt(step_sq),
    )
