"""Exact classical computations on A^n via partitions into equiprobable cells.

Every model involved in a computation must assign one common probability to
all words inside a cell. Three partitions are available:

* ``iid_types``: words grouped by letter counts; exact for iid models and
  their finite mixtures, any alphabet.
* ``binary_runs``: binary words grouped by (first letter, number of letter
  switches, number of zeros); exact for binary iid and Markov models.
* ``outcomes``: one cell per word (explicit enumeration, at most 2**24).

Probabilities are carried as logs so that masses like 2**-4096 stay exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DimensionGuardError, ModelError
from .models import (
    MAX_CLASSICAL_OUTCOMES,
    ClassicalIID,
    ClassicalMarkov,
    FiniteMixture,
    marginal_distribution,
)

MAX_TYPE_CELLS = 5_000_000
MAX_RUN_LENGTH = 1024


def _xlogy(count, logp):
    # count * log p with the convention 0 * log 0 = 0.
    count, logp = np.broadcast_arrays(np.asarray(count, dtype=float), np.asarray(logp, dtype=float))
    out = np.zeros(count.shape)
    np.multiply(count, logp, out=out, where=count > 0)
    return out


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True, eq=False)
class CellSpace:
    n: int
    d: int
    kind: str
    log_mult: np.ndarray
    data: np.ndarray

    @property
    def size(self) -> int:
        return self.log_mult.size

    def log_prob(self, m) -> np.ndarray:
        """Per-word log-probability of each cell under ``m``."""
        if isinstance(m, FiniteMixture):
            parts = [np.log(w) + self.log_prob(c) for w, c in zip(m.weights, m.components) if w > 0]
            return logsumexp(np.vstack(parts), axis=0)
        if self.kind == "outcomes":
            return _log(marginal_distribution(m, self.n))
        if self.kind == "iid_types":
            if not isinstance(m, ClassicalIID):
                raise ModelError("type cells are exact only for iid models")
            return _xlogy(self.data, _log(m.p)[None, :]).sum(axis=1)
        if isinstance(m, ClassicalIID):
            k = self.data[:, 1]
            lp = _log(m.p)
            return _xlogy(k, lp[0]) + _xlogy(self.n - k, lp[1])
        if isinstance(m, ClassicalMarkov):
            x0, counts = self.data[:, 0], self.data[:, 2:]
            lT = _log(m.T).ravel()
            return _log(m.pi)[x0] + _xlogy(counts, lT[None, :]).sum(axis=1)
        raise ModelError(f"{type(m).__name__} is not representable on binary run cells")

    def log_mass(self, m) -> np.ndarray:
        """Log of the total probability of each cell."""
        return self.log_mult + self.log_prob(m)

    def all_cells(self) -> "CellProjector":
        return CellProjector(self, np.ones(self.size, dtype=bool))

    def no_cells(self) -> "CellProjector":
        return CellProjector(self, np.zeros(self.size, dtype=bool))


def iid_type_space(d: int, n: int) -> CellSpace:
    """Letter-count types of words of length ``n`` over ``d`` letters."""
    count = int(round(np.exp(gammaln(n + d) - gammaln(d) - gammaln(n + 1))))
    if count > MAX_TYPE_CELLS:
        raise DimensionGuardError(f"{count} type cells exceed guard {MAX_TYPE_CELLS}")
    if d == 1:
        types = np.array([[n]])
    elif d == 2:
        k = np.arange(n + 1)
        types = np.column_stack([n - k, k])
    else:
        bars = np.array(list(itertools.combinations(range(n + d - 1), d - 1)))
        edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), n + d - 1)])
        types = np.diff(edges, axis=1) - 1
    log_mult = gammaln(n + 1) - gammaln(types + 1).sum(axis=1)
    return CellSpace(n, d, "iid_types", log_mult, types)


def _log_compositions(total, parts):
    # log of the number of ways to write `total` as an ordered sum of `parts` positive integers
    total, parts = np.asarray(total), np.asarray(parts)
    ok = np.where(parts == 0, total == 0, total >= parts)
    safe_t, safe_p = np.maximum(total, 1), np.maximum(parts, 1)
    val = gammaln(safe_t) - gammaln(safe_p) - gammaln(safe_t - safe_p + 1)
    val = np.where(parts == 0, 0.0, val)
    return np.where(ok, val, -np.inf)


def binary_run_space(n: int) -> CellSpace:
    """Binary words grouped by first letter, switch count and number of zeros.

    ``data`` columns: first letter, number of zeros, then transition counts
    n00, n01, n10, n11 (row-major order of the transition matrix).
    """
    if n > MAX_RUN_LENGTH:
        raise DimensionGuardError(f"run cells for n={n} exceed guard n <= {MAX_RUN_LENGTH}")
    x0, c, k = (a.ravel() for a in np.meshgrid([0, 1], np.arange(n), np.arange(n + 1), indexing="ij"))
    runs = c + 1
    r_first, r_second = (runs + 1) // 2, runs // 2
    r0 = np.where(x0 == 0, r_first, r_second)
    r1 = np.where(x0 == 0, r_second, r_first)
    log_mult = _log_compositions(k, r0) + _log_compositions(n - k, r1)
    keep = np.isfinite(log_mult)
    x0, c, k, r0, r1, log_mult = (a[keep] for a in (x0, c, k, r0, r1, log_mult))
    up, down = (c + 1) // 2, c // 2
    n01 = np.where(x0 == 0, up, down)
    n10 = np.where(x0 == 0, down, up)
    data = np.column_stack([x0, k, k - r0, n01, n10, (n - k) - r1])
    return CellSpace(n, 2, "binary_runs", log_mult, data)


def outcome_space(d: int, n: int) -> CellSpace:
    if d**n > MAX_CLASSICAL_OUTCOMES:
        raise DimensionGuardError(f"{d}**{n} outcomes exceed guard {MAX_CLASSICAL_OUTCOMES}")
    return CellSpace(n, d, "outcomes", np.zeros(d**n), np.arange(d**n))


def _leaves(models):
    for m in models:
        if isinstance(m, FiniteMixture):
            yield from m.components
        else:
            yield m


def cell_space_for(models, n: int) -> CellSpace:
    """Smallest exact partition for a collection of classical models."""
    leaves = list(_leaves(models))
    if not all(isinstance(m, (ClassicalIID, ClassicalMarkov)) for m in leaves):
        raise ModelError("cell spaces need classical iid or Markov models")
    dims = {m.site.dim for m in leaves}
    if len(dims) != 1:
        raise ModelError(f"models disagree on alphabet size: {sorted(dims)}")
    d = dims.pop()
    if all(isinstance(m, ClassicalIID) for m in leaves):
        return iid_type_space(d, n)
    if d == 2 and n <= MAX_RUN_LENGTH:
        return binary_run_space(n)
    return outcome_space(d, n)


@dataclass(frozen=True, eq=False)
class CellProjector:
    """A union of whole cells: an indicator set that is diagonal in the word basis."""

    space: CellSpace
    mask: np.ndarray

    @cached_property
    def log_rank(self) -> float:
        if not self.mask.any():
            return -np.inf
        return float(logsumexp(self.space.log_mult[self.mask]))

    @property
    def rank(self) -> float:
        return float(np.exp(self.log_rank))

    def log_mass(self, m) -> float:
        if not self.mask.any():
            return -np.inf
        return float(logsumexp(self.space.log_mass(m)[self.mask]))

    def mass(self, m) -> float:
        # near-full sets are summed through their complement to keep digits
        rest = CellProjector(self.space, ~self.mask).log_mass(m)
        if rest < np.log(0.5):
            return float(1.0 - np.exp(rest))
        return float(min(1.0, np.exp(self.log_mass(m))))

    def __or__(self, other: "CellProjector") -> "CellProjector":
        return CellProjector(self.space, self.mask | other.mask)

    def __and__(self, other: "CellProjector") -> "CellProjector":
        return CellProjector(self.space, self.mask & other.mask)

    def dominates(self, other: "CellProjector") -> bool:
        return bool(np.all(self.mask >= other.mask))

    def indicator(self) -> np.ndarray:
        """0/1 vector over words; only available for explicit outcome cells."""
        if self.space.kind != "outcomes":
            raise ModelError("word-level indicator needs an outcome cell space")
        return self.mask.astype(float)
