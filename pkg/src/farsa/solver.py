"""FaRSA-Group driver, PG-parameter policies and a baseline proximal-gradient solver."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import CompositeObjective, IterateState, check_vector, prox_update
from .exceptions import LineSearchError
from .linesearch import (
    DECREASE_ALPHA,
    NEW_ZERO,
    SAME_ALPHA,
    SUFF_DESCENT,
    update_cg,
    update_pg,
)
from .partition import decompose
from .subspace import cg_direction, hessian_model

OPTIMAL = "optimal"
ITER_LIMIT = "iter_limit"
TIME_LIMIT = "time_limit"
LINESEARCH_FAILURE = "linesearch_failure"

COUNTER_KEYS = ("cg_new_zero", "cg_suff_descent", "pg_same_alpha", "pg_decrease_alpha")


@dataclass
class SolveOptions:
    """Tunables of the method. Defaults follow the published parameter table."""

    phi: float = 1.0
    xi: float = 0.5
    eta: float = 1e-3
    zeta: float = 0.8
    p: float = 2.0
    kappa1: float = 0.1
    kappa2: float = 1e-2
    theta: float = math.pi / 4
    q: float = 1.0
    mu: float = 1.0
    delta: float = 1e-8
    tol_rel: float = 1e-6
    max_iter: int = 100_000
    max_seconds: float = 900.0
    alpha_update: str = "adaptive"
    max_alpha_increases: int = 100
    kappa2_rescale: bool = True
    phi_switch: bool = False
    phi_switch_initial: float = 0.8
    phi_switch_threshold: float = 1e-3
    cg_target_factor: float = 0.1
    cg_target_power: float = 1.5
    cg_target_floor: float = 1e-10
    cg_trust_scale: float = 1e3
    max_backtracks: int = 100
    record_history: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("phi", "xi", "eta", "zeta"):
            v = getattr(self, name)
            if name == "phi":
                ok = 0 < v <= 1
            else:
                ok = 0 < v < 1
            if not ok:
                raise ValueError(f"{name}={v} out of range")
        for name in ("kappa1", "kappa2", "p", "mu", "tol_rel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.theta < math.pi / 2:
            raise ValueError("theta must lie in (0, pi/2)")
        if not 1 <= self.q <= 2:
            raise ValueError("q must lie in [1, 2]")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.alpha_update not in ("basic", "adaptive"):
            raise ValueError("alpha_update must be 'basic' or 'adaptive'")
        if not 0 < self.phi_switch_initial <= 1:
            raise ValueError("phi_switch_initial out of range")
        if self.max_iter < 0 or self.max_backtracks < 1:
            raise ValueError("iteration caps must be positive")
        return self

    @classmethod
    def from_dict(cls, values: dict) -> "SolveOptions":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown option(s): {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    iter: int
    type: str
    flag: str
    chi_cg: float
    chi_pg: float
    alpha: float
    objective: float  # F after the step
    zero_groups: int  # after the step
    cg_iters: int
    backtracks: int


TRACE_COLUMNS = tuple(f.name for f in fields(IterationRecord))


@dataclass
class SolveReport:
    x_final: np.ndarray
    status: str
    objective_final: float
    chi_final: float
    iterations: int
    trace: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    objective_initial: float = float("nan")
    zero_groups_initial: int = 0
    alpha_initial: float = float("nan")
    solver: str = "farsa"
    elapsed: float = 0.0
    history: list | None = None
    message: str = ""

    @property
    def zero_groups_final(self) -> int:
        return self.trace[-1].zero_groups if self.trace else self.zero_groups_initial

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self, include_trace=False) -> dict:
        out = {
            "solver": self.solver,
            "status": self.status,
            "message": self.message,
            "objective_initial": self.objective_initial,
            "objective_final": self.objective_final,
            "chi_final": self.chi_final,
            "iterations": self.iterations,
            "alpha_initial": self.alpha_initial,
            "zero_groups_initial": self.zero_groups_initial,
            "zero_groups_final": self.zero_groups_final,
            "counters": dict(self.counters),
            "elapsed_seconds": self.elapsed,
            "x_final": [float(v) for v in self.x_final],
        }
        if include_trace:
            out["trace"] = [asdict(r) for r in self.trace]
        return out


def update_alpha_basic(alpha, flag, zeta=0.8):
    """Shrink by ``zeta`` after a PG backtrack, otherwise keep."""
    return zeta * alpha if flag == DECREASE_ALPHA else alpha


def update_alpha_adaptive(d, step, grad_f_k, f_k, f_next, alpha_k=None,
                          allow_increase=True):
    """PG parameter from a local Lipschitz estimate along the last step ``step * d``.

    ``alpha_hat = ||step d||^2 / (2 (f_next - f_k - step grad_f_k^T d))`` and the
    new value is ``min(1, alpha_hat / 2)``. With ``allow_increase=False`` the cap
    is ``alpha_k`` instead of 1. Non-positive curvature yields the cap.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    dx = step * np.asarray(d, dtype=float)
    cap = 1.0 if allow_increase or alpha_k is None else min(1.0, alpha_k)
    denom = 2.0 * (f_next - f_k - float(grad_f_k @ dx))
    if not denom > 0:
        return cap
    alpha_hat = float(dx @ dx) / denom
    return min(cap, 0.5 * alpha_hat)


def estimate_alpha0(obj: CompositeObjective, x0, rng=None, radius=1e-8):
    """``min(1, ||x0 - y0|| / ||grad f(x0) - grad f(y0)||)`` for a random nearby ``y0``."""
    rng = np.random.default_rng(rng)
    x0 = np.asarray(x0, dtype=float)
    u = rng.standard_normal(x0.shape[0])
    u *= radius / np.linalg.norm(u)
    y0 = x0 + u
    dist = float(np.linalg.norm(y0 - x0))
    diff = float(np.linalg.norm(obj.gradient(x0) - obj.gradient(y0)))
    if diff == 0.0:
        return 1.0
    return min(1.0, dist / diff)


def select_groups(mask, step_norms, phi):
    """Smallest prefix (by descending step norm) carrying a ``phi`` fraction of the step."""
    if phi >= 1.0:
        return mask
    cand = np.flatnonzero(mask)
    order = cand[np.argsort(-step_norms[cand], kind="stable")]
    sq = step_norms[order] ** 2
    need = phi * phi * sq.sum()
    k = int(np.searchsorted(np.cumsum(sq), need, side="left")) + 1
    chosen = np.zeros_like(mask)
    chosen[order[: min(k, order.size)]] = True
    return chosen


def _empty_counters():
    return {k: 0 for k in COUNTER_KEYS}


def solve(obj: CompositeObjective, x0=None, options: SolveOptions | None = None, *,
          alpha0=None, seed=0) -> SolveReport:
    """Minimise ``f + r`` with the reduced-space Newton-CG / proximal-gradient method.

    Each iteration computes the PG step, splits the groups into a Newton-CG
    subspace and a PG subspace, and takes a globalised step in whichever
    subspace carries the larger share of the PG step.

    Parameters
    ----------
    obj : CompositeObjective
    x0 : array-like, optional
        Starting point; zeros by default.
    options : SolveOptions, optional
    alpha0 : float, optional
        Initial PG parameter in (0, 1]. Estimated from a random gradient
        difference when omitted.
    seed : int
        Seed for the ``alpha0`` estimate, the only source of randomness.
    """
    opts = options or SolveOptions()
    part = obj.partition
    x = np.zeros(obj.n) if x0 is None else check_vector(x0, obj.n).copy()
    if alpha0 is None:
        alpha0 = estimate_alpha0(obj, x, seed)
    if not 0 < alpha0 <= 1:
        raise ValueError("alpha0 must lie in (0, 1]")
    alpha = float(alpha0)
    phi = opts.phi_switch_initial if opts.phi_switch else opts.phi

    start = time.perf_counter()
    f_x = obj.smooth_value(x)
    F_x = f_x + obj.regularizer(x)
    grad = obj.gradient(x)
    report = SolveReport(
        x_final=x, status=ITER_LIMIT, objective_final=F_x, chi_final=float("nan"),
        iterations=0, counters=_empty_counters(), objective_initial=F_x,
        zero_groups_initial=int(part.zero_groups(x).sum()), alpha_initial=alpha,
        history=[x.copy()] if opts.record_history else None,
    )
    tol = None
    increases = 0
    k = 0
    while True:
        state = IterateState(x=x, alpha=alpha, grad_f=grad,
                             pg_step=prox_update(x, alpha, obj, grad=grad) - x, objective=F_x)
        dec = decompose(state, obj, opts)
        chi = max(dec.chi_cg, dec.chi_pg)
        report.chi_final = chi
        if tol is None:
            tol = opts.tol_rel * max(dec.chi_cg, dec.chi_pg, 1.0)
        if chi <= tol:
            report.status = OPTIMAL
            break
        if k >= opts.max_iter:
            report.status = ITER_LIMIT
            break
        if time.perf_counter() - start > opts.max_seconds:
            report.status = TIME_LIMIT
            break

        cg_iters = 0
        try:
            if dec.chi_pg <= dec.chi_cg:
                iset = select_groups(dec.icg, dec.step_norms, phi)
                system = hessian_model(obj, x, iset, grad_F=dec.grad_F)
                gnorm = float(np.linalg.norm(system.grad))
                if gnorm == 0.0:
                    # only reachable through rounding: the step on I^cg vanishes too
                    report.status = OPTIMAL
                    report.message = "zero reduced gradient"
                    break
                cg = cg_direction(system, gnorm, opts)
                cg_iters = cg.iterations
                d = np.zeros(obj.n)
                d[system.idx] = cg.direction
                res = update_cg(x, d, iset, dec.rho, obj, opts, grad_F=dec.grad_F)
                kind = "cg"
                if opts.phi_switch and phi < 1.0 and -res.smooth_change <= opts.phi_switch_threshold:
                    phi = 1.0
            else:
                iset = select_groups(dec.ipg, dec.step_norms, phi)
                res = update_pg(x, state.pg_step, alpha, iset, obj, opts)
                kind = "pg"
        except LineSearchError as exc:
            report.status = LINESEARCH_FAILURE
            report.message = str(exc)
            break

        x_next = res.x_next
        f_next = f_x + res.smooth_change
        grad_next = obj.gradient(x_next)
        if opts.alpha_update == "basic":
            alpha_next = update_alpha_basic(alpha, res.flag, opts.zeta) if kind == "pg" else alpha
        else:
            allow = increases < opts.max_alpha_increases
            # realised displacement (differs from step * d only after a projection);
            # f_k = 0 and f_next = df keep the accurately computed difference intact
            alpha_next = update_alpha_adaptive(x_next - x, 1.0, grad, 0.0, res.smooth_change,
                                               alpha, allow)
            if alpha_next > alpha:
                increases += 1

        F_x = F_x + res.objective_change
        x, f_x, grad, alpha = x_next, f_next, grad_next, alpha_next
        k += 1
        report.counters[f"{kind}_{res.flag}"] += 1
        report.trace.append(IterationRecord(
            iter=k, type=kind, flag=res.flag, chi_cg=dec.chi_cg, chi_pg=dec.chi_pg,
            alpha=alpha, objective=F_x, zero_groups=int(part.zero_groups(x).sum()),
            cg_iters=cg_iters, backtracks=res.backtracks,
        ))
        if report.history is not None:
            report.history.append(x.copy())

    report.x_final = x
    report.objective_final = F_x
    report.iterations = k
    report.elapsed = time.perf_counter() - start
    return report


def solve_baseline_pg(obj: CompositeObjective, x0=None, tol=1e-6, max_iter=100_000, *,
                      alpha0=None, seed=0, options: SolveOptions | None = None,
                      max_seconds=None) -> SolveReport:
    """Full-space proximal gradient with backtracking on the PG step.

    Terminates when ``||s(x, alpha)|| <= tol * max(||s(x0, alpha0)||, 1)``.
    """
    opts = options or SolveOptions()
    part = obj.partition
    x = np.zeros(obj.n) if x0 is None else check_vector(x0, obj.n).copy()
    if alpha0 is None:
        alpha0 = estimate_alpha0(obj, x, seed)
    alpha = float(alpha0)
    max_seconds = opts.max_seconds if max_seconds is None else max_seconds
    everything = np.ones(part.n_groups, dtype=bool)

    start = time.perf_counter()
    F_x = obj.value(x)
    grad = obj.gradient(x)
    report = SolveReport(
        x_final=x, status=ITER_LIMIT, objective_final=F_x, chi_final=float("nan"),
        iterations=0, counters=_empty_counters(), objective_initial=F_x,
        zero_groups_initial=int(part.zero_groups(x).sum()), alpha_initial=alpha,
        solver="pg", history=[x.copy()] if opts.record_history else None,
    )
    threshold = None
    k = 0
    while True:
        s = prox_update(x, alpha, obj, grad=grad) - x
        chi = float(np.linalg.norm(s))
        report.chi_final = chi
        if threshold is None:
            threshold = tol * max(chi, 1.0)
        if chi <= threshold:
            report.status = OPTIMAL
            break
        if k >= max_iter:
            break
        if time.perf_counter() - start > max_seconds:
            report.status = TIME_LIMIT
            break
        try:
            res = update_pg(x, s, alpha, everything, obj, opts)
        except LineSearchError as exc:
            report.status = LINESEARCH_FAILURE
            report.message = str(exc)
            break
        alpha = update_alpha_basic(alpha, res.flag, opts.zeta)
        x = res.x_next
        grad = obj.gradient(x)
        F_x = F_x + res.objective_change
        k += 1
        report.counters[f"pg_{res.flag}"] += 1
        report.trace.append(IterationRecord(
            iter=k, type="pg", flag=res.flag, chi_cg=0.0, chi_pg=chi, alpha=alpha,
            objective=F_x, zero_groups=int(part.zero_groups(x).sum()), cg_iters=0,
            backtracks=res.backtracks,
        ))
        if report.history is not None:
            report.history.append(x.copy())

    report.x_final = x
    report.objective_final = F_x
    report.iterations = k
    report.elapsed = time.perf_counter() - start
    return report


__all__ = [
    "SolveOptions", "SolveReport", "IterationRecord", "TRACE_COLUMNS", "solve",
    "solve_baseline_pg", "update_alpha_basic", "update_alpha_adaptive", "estimate_alpha0",
    "select_groups", "OPTIMAL", "ITER_LIMIT", "TIME_LIMIT", "LINESEARCH_FAILURE",
    "NEW_ZERO", "SUFF_DESCENT", "SAME_ALPHA", "DECREASE_ALPHA",
]
