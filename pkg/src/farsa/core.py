"""Group structure, the group-l2 regularizer and the proximal-gradient operator.

The objective handled throughout the package is

    F(x) = f(x) + r(x),    r(x) = sum_i lam_i * ||x[G_i]||_2

with ``f`` smooth and convex and ``{G_i}`` a partition of ``{0, ..., n-1}``.
Per-group quantities are computed with ``np.bincount`` over a coordinate to
group map, so groups need not be contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .exceptions import DimensionError, NonDifferentiableError


class SmoothLoss(Protocol):
    """Contract for the smooth part ``f``."""

    n_features: int

    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def hessian_operator(
        self, x: np.ndarray, idx: np.ndarray
    ) -> Callable[[np.ndarray], np.ndarray]: ...


class GroupPartition:
    """Disjoint groups covering ``{0, ..., n-1}`` with one positive weight each.

    Parameters
    ----------
    groups : sequence of sequences of int
        Index lists, one per group. Stored sorted.
    weights : array-like of float, optional
        Per-group weights ``lam_i``. Defaults to all ones.
    n : int, optional
        Dimension. Inferred as ``1 + max index`` when omitted.
    """

    def __init__(self, groups: Sequence[Sequence[int]], weights=None, n: int | None = None):
        groups = [np.sort(np.asarray(g, dtype=np.intp).ravel()) for g in groups]
        if not groups:
            raise ValueError("partition needs at least one group")
        for i, g in enumerate(groups):
            if g.size == 0:
                raise ValueError(f"group {i} is empty")
        flat = np.concatenate(groups)
        if n is None:
            n = int(flat.max()) + 1
        if flat.min() < 0 or flat.max() >= n:
            raise ValueError("group index out of range")
        counts = np.bincount(flat, minlength=n)
        if np.any(counts > 1):
            raise ValueError("groups overlap")
        if np.any(counts == 0):
            raise ValueError("groups do not cover every coordinate")

        if weights is None:
            weights = np.ones(len(groups))
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != (len(groups),):
            raise ValueError("need exactly one weight per group")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("group weights must be positive and finite")

        self.groups = tuple(groups)
        self.weights = weights
        self.weights.setflags(write=False)
        self.n = int(n)
        self.n_groups = len(groups)
        self.sizes = np.array([g.size for g in groups], dtype=np.intp)
        group_id = np.empty(n, dtype=np.intp)
        for i, g in enumerate(groups):
            group_id[g] = i
        self.group_id = group_id
        self.group_id.setflags(write=False)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], weights=None) -> "GroupPartition":
        """Contiguous groups with the given sizes."""
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        groups = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        return cls(groups, weights, n=int(bounds[-1]))

    def with_weights(self, weights) -> "GroupPartition":
        return GroupPartition(self.groups, weights, n=self.n)

    def __repr__(self):
        return f"GroupPartition(n={self.n}, n_groups={self.n_groups})"

    # -- per-group reductions -------------------------------------------------

    def sum_squares(self, v: np.ndarray) -> np.ndarray:
        """Per-group sum of squares of a full-length vector."""
        return np.bincount(self.group_id, weights=v * v, minlength=self.n_groups)

    def norms(self, v: np.ndarray) -> np.ndarray:
        """Per-group Euclidean norms ``||v[G_i]||_2``."""
        return np.sqrt(self.sum_squares(v))

    def zero_groups(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of groups whose block is exactly zero."""
        nonzero = np.bincount(self.group_id, weights=(x != 0.0), minlength=self.n_groups)
        return nonzero == 0

    def coord_mask(self, group_mask: np.ndarray) -> np.ndarray:
        """Expand a group mask to a coordinate mask."""
        return np.asarray(group_mask, dtype=bool)[self.group_id]

    def indices(self, group_mask: np.ndarray) -> np.ndarray:
        """Sorted coordinate indices belonging to the selected groups."""
        return np.flatnonzero(self.coord_mask(group_mask))

    def gather(self, x: np.ndarray, i: int) -> np.ndarray:
        """Subvector ``x[G_i]``."""
        return x[self.groups[i]]

    def scatter(self, out: np.ndarray, i: int, block: np.ndarray) -> np.ndarray:
        """Write ``block`` into ``out[G_i]`` in place and return ``out``."""
        out[self.groups[i]] = block
        return out

    def group_mask(self, groups) -> np.ndarray:
        """Normalise a group selection (mask or index iterable) to a mask."""
        groups = np.asarray(groups)
        if groups.dtype == bool:
            if groups.shape != (self.n_groups,):
                raise DimensionError("group mask has wrong length")
            return groups
        mask = np.zeros(self.n_groups, dtype=bool)
        mask[groups.astype(np.intp)] = True
        return mask


@dataclass(frozen=True)
class CompositeObjective:
    """``F = f + r`` for a smooth loss and a weighted group partition."""

    loss: SmoothLoss
    partition: GroupPartition

    def __post_init__(self):
        if self.loss.n_features != self.partition.n:
            raise DimensionError(
                f"loss has {self.loss.n_features} features but partition covers {self.partition.n}"
            )

    @property
    def n(self) -> int:
        return self.partition.n

    def smooth_value(self, x):
        return self.loss.value(x)

    def gradient(self, x):
        return self.loss.gradient(x)

    def regularizer(self, x):
        return regularizer_value(x, self.partition)

    def value(self, x):
        return self.loss.value(x) + regularizer_value(x, self.partition)

    def change_from(self, x):
        """Return ``y -> (f(y) - f(x), F(y) - F(x))`` evaluated without cancellation."""
        loss_change = getattr(self.loss, "change_from", None)
        if loss_change is not None:
            df_from = loss_change(x)
        else:
            fx = self.loss.value(x)
            df_from = lambda y: self.loss.value(y) - fx  # noqa: E731
        r_from = regularizer_change_from(x, self.partition)

        def change(y):
            df = df_from(y)
            return df, df + r_from(y)

        return change


@dataclass
class IterateState:
    """Everything computed at the start of one outer iteration."""

    x: np.ndarray
    alpha: float
    grad_f: np.ndarray
    pg_step: np.ndarray
    objective: float
    icg: np.ndarray | None = None
    ipg: np.ndarray | None = None
    chi_cg: float = 0.0
    chi_pg: float = 0.0

    @classmethod
    def at(cls, obj: CompositeObjective, x: np.ndarray, alpha: float, objective=None):
        x = check_vector(x, obj.n)
        grad = obj.gradient(x)
        step = prox_update(x, alpha, obj, grad=grad) - x
        if objective is None:
            objective = obj.value(x)
        return cls(x=x, alpha=float(alpha), grad_f=grad, pg_step=step, objective=objective)


def check_vector(x, n: int | None = None) -> np.ndarray:
    """Validate a dense real vector (finite entries, optional length)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise DimensionError(f"expected length {n}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    return x


def regularizer_value(x: np.ndarray, partition: GroupPartition) -> float:
    """``sum_i lam_i ||x[G_i]||_2``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (partition.n,):
        raise DimensionError(f"expected length {partition.n}, got {x.shape}")
    return float(partition.weights @ partition.norms(x))


def regularizer_change_from(x: np.ndarray, partition: GroupPartition):
    """Return ``y -> r(y) - r(x)`` using ``||y|| - ||x|| = (||y||^2 - ||x||^2) / (||y|| + ||x||)``."""
    x = np.asarray(x, dtype=float)
    nx = partition.norms(x)
    gid = partition.group_id
    k = partition.n_groups

    def change(y):
        delta = y - x
        ny = partition.norms(y)
        num = np.bincount(gid, weights=delta * (2.0 * x + delta), minlength=k)
        den = nx + ny
        diff = np.zeros(k)
        pos = den > 0
        diff[pos] = num[pos] / den[pos]
        return float(partition.weights @ diff)

    return change


def regularizer_gradient_on(x: np.ndarray, groups, partition: GroupPartition) -> np.ndarray:
    """Gradient blocks ``lam_i x_i / ||x_i||`` on the requested groups.

    Entries outside the requested groups are zero. Raises
    ``NonDifferentiableError`` if any requested block is zero.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (partition.n,):
        raise DimensionError(f"expected length {partition.n}, got {x.shape}")
    mask = partition.group_mask(groups)
    norms = partition.norms(x)
    if np.any(norms[mask] == 0.0):
        bad = np.flatnonzero(mask & (norms == 0.0)).tolist()
        raise NonDifferentiableError(f"regularizer not differentiable on zero groups {bad}")
    scale = np.zeros(partition.n_groups)
    scale[mask] = partition.weights[mask] / norms[mask]
    return scale[partition.group_id] * x


def group_shrink(v: np.ndarray, alpha: float, partition: GroupPartition) -> np.ndarray:
    """Proximal map of ``alpha * r`` evaluated at ``v`` (block soft-thresholding)."""
    norms = partition.norms(v)
    thresh = alpha * partition.weights
    factor = np.zeros(partition.n_groups)
    # blocks with norm <= alpha*lam (including 0/0) map to exactly zero
    keep = norms > thresh
    factor[keep] = 1.0 - thresh[keep] / norms[keep]
    return factor[partition.group_id] * v


def prox_update(x: np.ndarray, alpha: float, obj: CompositeObjective, grad=None) -> np.ndarray:
    """Proximal-gradient update ``T(x, alpha)``.

    ``grad`` may be supplied to reuse an already computed ``grad f(x)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (obj.n,):
        raise DimensionError(f"expected length {obj.n}, got {x.shape}")
    if grad is None:
        grad = obj.gradient(x)
    return group_shrink(x - alpha * grad, alpha, obj.partition)


def prox_step(x: np.ndarray, alpha: float, obj: CompositeObjective, grad=None) -> np.ndarray:
    """Proximal-gradient step ``s(x, alpha) = T(x, alpha) - x``."""
    return prox_update(x, alpha, obj, grad=grad) - np.asarray(x, dtype=float)


def objective_gradient_norms(x, grad_f, partition: GroupPartition, norms_x=None):
    """Per-group ``||grad_{G_i}(f + r)(x)||`` on groups with nonzero x-block.

    Zero groups get ``nan``; callers must not read them. Returns
    ``(full gradient of f + r on differentiable groups, per-group norms)``.
    """
    if norms_x is None:
        norms_x = partition.norms(x)
    nz = norms_x > 0.0
    scale = np.zeros(partition.n_groups)
    scale[nz] = partition.weights[nz] / norms_x[nz]
    grad_F = grad_f + scale[partition.group_id] * x
    grad_F = np.where(nz[partition.group_id], grad_F, 0.0)
    gnorms = partition.norms(grad_F)
    gnorms[~nz] = np.nan
    return grad_F, gnorms
