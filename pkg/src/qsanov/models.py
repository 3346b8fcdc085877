"""Stationary source models and their finite marginals.

Classical processes (iid, Markov) live on an abelian site algebra and
materialize as probability vectors; quantum models materialize dense density
operators. ``FiniteMixture`` carries a finitely supported ergodic
decomposition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import operators as ops
from .errors import DimensionGuardError, ModelError

MAX_CLASSICAL_OUTCOMES = 2**24
PROB_TOL = 1e-10
STATIONARY_TOL = 1e-9


@dataclass(frozen=True)
class SiteAlgebra:
    dim: int
    abelian: bool


def _prob_vector(p, name="p") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ModelError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ModelError(f"{name} is not a probability vector: {p}")
    return p


@dataclass(frozen=True, eq=False)
class ClassicalIID:
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _prob_vector(self.p))

    @property
    def site(self) -> SiteAlgebra:
        return SiteAlgebra(self.p.size, True)


def stationary_vector(T) -> np.ndarray:
    """Unique stationary distribution of a row-stochastic matrix."""
    T = np.asarray(T, dtype=float)
    d = T.shape[0]
    a = np.vstack([T.T - np.eye(d), np.ones((1, d))])
    if np.linalg.matrix_rank(T.T - np.eye(d), tol=1e-10) < d - 1:
        raise ModelError("stationary distribution is not unique; pass pi explicitly")
    b = np.zeros(d + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class ClassicalMarkov:
    """Stationary Markov chain with row-stochastic transition matrix ``T``."""

    T: np.ndarray
    pi: np.ndarray = None

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ModelError("T must be square")
        if np.any(T < 0) or np.max(np.abs(T.sum(axis=1) - 1.0)) > PROB_TOL:
            raise ModelError("T must be row-stochastic")
        pi = stationary_vector(T) if self.pi is None else _prob_vector(self.pi, "pi")
        if pi.size != T.shape[0]:
            raise ModelError("pi and T disagree in size")
        if np.max(np.abs(pi @ T - pi)) > STATIONARY_TOL:
            raise ModelError("pi is not stationary for T")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "pi", pi)

    @property
    def site(self) -> SiteAlgebra:
        return SiteAlgebra(self.T.shape[0], True)


@dataclass(frozen=True, eq=False)
class QuantumIID:
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", ops.as_density(self.rho))

    @property
    def site(self) -> SiteAlgebra:
        return SiteAlgebra(self.rho.shape[0], False)


def _integer_root(dim: int, k: int) -> int:
    r = round(dim ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 1 and cand**k == dim:
            return cand
    raise ModelError(f"dimension {dim} is not a {k}-th power")


@dataclass(frozen=True, eq=False)
class QuantumBlockIID:
    """Product of identical ``block_len``-site blocks (stationary under the block shift)."""

    rho_block: np.ndarray
    block_len: int
    site_dim: int = None

    def __post_init__(self):
        if self.block_len < 1:
            raise ModelError("block_len must be positive")
        rho = ops.as_density(self.rho_block)
        d = self.site_dim or _integer_root(rho.shape[0], self.block_len)
        if d**self.block_len != rho.shape[0]:
            raise ModelError("rho_block dimension is not site_dim**block_len")
        object.__setattr__(self, "rho_block", rho)
        object.__setattr__(self, "site_dim", d)

    @property
    def site(self) -> SiteAlgebra:
        return SiteAlgebra(self.site_dim, False)


@dataclass(frozen=True, eq=False)
class FiniteMixture:
    weights: np.ndarray
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        w = _prob_vector(self.weights, "weights")
        comps = tuple(self.components)
        if len(comps) != w.size or not comps:
            raise ModelError("weights and components disagree in length")
        if any(isinstance(c, FiniteMixture) for c in comps):
            raise ModelError("mixtures nest at most one level deep")
        if len({c.site for c in comps}) != 1:
            raise ModelError("mixture components must share one site algebra")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def site(self) -> SiteAlgebra:
        return self.components[0].site


SourceModel = Union[ClassicalIID, ClassicalMarkov, QuantumIID, QuantumBlockIID, FiniteMixture]
CLASSICAL_VARIANTS = (ClassicalIID, ClassicalMarkov)


def is_classical(m) -> bool:
    return m.site.abelian


def as_markov(m) -> ClassicalMarkov:
    if isinstance(m, ClassicalMarkov):
        return m
    if isinstance(m, ClassicalIID):
        return ClassicalMarkov(np.tile(m.p, (m.p.size, 1)), m.p)
    raise ModelError(f"{type(m).__name__} has no Markov form")


def as_quantum(m):
    """View a classical iid model as a diagonal quantum iid model."""
    if isinstance(m, ClassicalIID):
        return QuantumIID(np.diag(m.p))
    return m


# -- marginals ---------------------------------------------------------------


def _markov_paths(start: np.ndarray, T: np.ndarray, n: int) -> np.ndarray:
    d = T.shape[0]
    dist = start.astype(float)
    for _ in range(n - 1):
        dist = (dist[:, None] * T[np.arange(dist.size) % d]).ravel()
    return dist


def marginal_distribution(m, n: int, max_outcomes: int = MAX_CLASSICAL_OUTCOMES) -> np.ndarray:
    """Probabilities of all ``dim**n`` words, big-endian word order."""
    if n < 1:
        raise ValueError("n must be positive")
    if not is_classical(m):
        raise ModelError(f"{type(m).__name__} is not a classical model")
    if m.site.dim**n > max_outcomes:
        raise DimensionGuardError(f"{m.site.dim}**{n} outcomes exceed guard {max_outcomes}")
    if isinstance(m, ClassicalIID):
        return reduce(np.kron, [m.p] * n)
    if isinstance(m, ClassicalMarkov):
        return _markov_paths(m.pi, m.T, n)
    return sum(w * marginal_distribution(c, n, max_outcomes) for w, c in zip(m.weights, m.components))


def marginal_density(m, n: int, max_dim: int = ops.DEFAULT_MAX_DIM) -> np.ndarray:
    """Density operator of the n-site restriction."""
    if n < 1:
        raise ValueError("n must be positive")
    d = m.site.dim
    if d**n > max_dim:
        raise DimensionGuardError(f"dimension {d}**{n} exceeds guard {max_dim}")
    if is_classical(m):
        return np.diag(marginal_distribution(m, n))
    if isinstance(m, QuantumIID):
        return ops.tensor_power(m.rho, n, max_dim)
    if isinstance(m, QuantumBlockIID):
        full, rest = divmod(n, m.block_len)
        out = ops.tensor_power(m.rho_block, full, max_dim)
        if rest:
            dims = [m.site_dim] * m.block_len
            out = np.kron(out, ops.partial_trace(m.rho_block, dims, range(rest)))
        return out
    return sum(w * marginal_density(c, n, max_dim) for w, c in zip(m.weights, m.components))


# -- rates -------------------------------------------------------------------


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _vn_entropy(rho) -> float:
    lam = np.clip(np.linalg.eigvalsh(rho), 0.0, None)
    return shannon_entropy(lam)


def entropy_rate(m) -> float:
    """Closed-form entropy rate in nats per site."""
    if isinstance(m, ClassicalIID):
        return shannon_entropy(m.p)
    if isinstance(m, ClassicalMarkov):
        return float(sum(pi_i * shannon_entropy(row) for pi_i, row in zip(m.pi, m.T)))
    if isinstance(m, QuantumIID):
        return _vn_entropy(m.rho)
    if isinstance(m, QuantumBlockIID):
        return _vn_entropy(m.rho_block) / m.block_len
    raise ModelError("entropy rate of a mixture is component-wise; use ergodic_components / overline_s")


# -- structure of Markov chains ---------------------------------------------


def is_irreducible(T) -> bool:
    n_comp, _ = connected_components(np.asarray(T) > 0, directed=True, connection="strong")
    return n_comp == 1


def cyclic_classes(T) -> tuple[int, np.ndarray]:
    """Period of an irreducible chain and the cyclic class label of each state."""
    A = np.asarray(T) > 0
    d = A.shape[0]
    level = np.full(d, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(A[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    period = 0
    for u, v in zip(*np.nonzero(A)):
        period = math.gcd(period, int(level[u] + 1 - level[v]))
    return period, level % period


@dataclass(frozen=True, eq=False)
class ErgodicComponentList:
    weights: np.ndarray
    components: list
    block_len: int = 1

    def __iter__(self):
        return iter(zip(self.weights, self.components))


def block_transform(m, L: int, max_dim: int = ops.DEFAULT_MAX_DIM):
    """Re-read the process with ``L`` consecutive sites as one site."""
    if L < 1:
        raise ValueError("L must be positive")
    if L == 1:
        return m
    d = m.site.dim
    if d**L > max_dim:
        raise DimensionGuardError(f"block dimension {d}**{L} exceeds guard {max_dim}")
    if isinstance(m, ClassicalIID):
        return ClassicalIID(reduce(np.kron, [m.p] * L))
    if isinstance(m, QuantumIID):
        return QuantumIID(ops.tensor_power(m.rho, L, max_dim))
    if isinstance(m, ClassicalMarkov):
        D = d**L
        inner = _markov_paths(np.ones(d), m.T, L)
        first = np.arange(D) // d ** (L - 1)
        last = np.arange(D) % d
        T_block = m.T[last][:, first] * inner[None, :]
        return ClassicalMarkov(T_block, _markov_paths(m.pi, m.T, L))
    if isinstance(m, QuantumBlockIID):
        if L % m.block_len:
            raise ModelError(f"L={L} is not a multiple of block_len={m.block_len}")
        return QuantumIID(ops.tensor_power(m.rho_block, L // m.block_len, max_dim))
    return FiniteMixture(m.weights, [block_transform(c, L, max_dim) for c in m.components])


def ergodic_components(m, block_len: int = 1) -> ErgodicComponentList:
    """Finite ergodic decomposition under the ``block_len``-power shift."""
    if isinstance(m, FiniteMixture):
        if block_len != 1:
            raise ModelError("mixtures are decomposed under the unit shift only")
        return ErgodicComponentList(m.weights, list(m.components), 1)
    if isinstance(m, ClassicalMarkov):
        if not is_irreducible(m.T):
            raise ModelError("reducible chain: decomposition into closed classes is not supported")
        period, labels = cyclic_classes(m.T)
        if period > 1:
            if block_len % period:
                raise ModelError(f"period {period} does not divide block_len {block_len}")
            blocked = block_transform(m, block_len)
            d = m.site.dim
            first = np.arange(blocked.site.dim) // d ** (block_len - 1)
            comps = []
            for r in range(period):
                pi_r = np.where(labels[first] == r, blocked.pi, 0.0) * period
                comps.append(ClassicalMarkov(blocked.T, pi_r / pi_r.sum()))
            return ErgodicComponentList(np.full(period, 1.0 / period), comps, block_len)
    return ErgodicComponentList(np.ones(1), [block_transform(m, block_len)], block_len)


def restrict_tail(m, l: int, mm: int):
    """Keep the last ``mm`` sites of every ``l + mm`` block (partial trace over the first ``l``)."""
    if l < 0 or mm < 1:
        raise ValueError("need l >= 0 and mm >= 1")
    if l == 0:
        return m
    L = l + mm
    if isinstance(m, FiniteMixture):
        return FiniteMixture(m.weights, [restrict_tail(c, l, mm) for c in m.components])
    if isinstance(m, QuantumBlockIID):
        if m.block_len != L:
            raise ModelError(f"block_len {m.block_len} != l + mm = {L}")
        d, rho = m.site_dim, m.rho_block
    elif isinstance(m, QuantumIID):
        d, rho = _integer_root(m.site.dim, L), m.rho
    elif isinstance(m, ClassicalIID):
        d = _integer_root(m.site.dim, L)
        tail = m.p.reshape(d**l, d**mm).sum(axis=0)
        return ClassicalIID(tail)
    else:
        raise ModelError(f"restriction of {type(m).__name__} is not a supported model class")
    tail = ops.partial_trace(rho, [d] * L, range(l, L))
    if mm == 1:
        return QuantumIID(tail)
    return QuantumBlockIID(tail, mm, d)


# -- mixing ------------------------------------------------------------------


@dataclass(frozen=True)
class MixingReport:
    l_values: list
    alpha: list
    certified_class: str
    star_mixing: bool


def mixing_coefficient(m, l: int, k: int = 1) -> float:
    """Best constant alpha with alpha*P(B)P(C) <= P(B and C) <= P(B)P(C)/alpha at gap ``l``.

    For a stationary Markov chain the optimum over past/future cylinders
    reduces to ``min_ij min(r_ij, 1/r_ij)`` with ``r_ij = (T^l)_ij / pi_j``;
    ``k`` only labels the audited cylinder length.
    """
    if l < 1:
        raise ValueError("l must be positive")
    if isinstance(m, ClassicalIID):
        return 1.0
    if not isinstance(m, ClassicalMarkov):
        raise ModelError("mixing audit supports classical iid and Markov models only")
    Tl = np.linalg.matrix_power(m.T, l)
    alpha = 1.0
    for i in np.flatnonzero(m.pi > 0):
        for j in np.flatnonzero(m.pi > 0):
            r = Tl[i, j] / m.pi[j]
            alpha = min(alpha, r, 1.0 / r if r > 0 else 0.0)
    return float(min(1.0, max(0.0, alpha)))


def is_star_mixing(m) -> bool:
    """Structural check: iid, or irreducible aperiodic on the support of pi."""
    if isinstance(m, ClassicalIID):
        return True
    if not isinstance(m, ClassicalMarkov):
        raise ModelError("mixing audit supports classical iid and Markov models only")
    keep = m.pi > 0
    T = m.T[np.ix_(keep, keep)]
    return bool(is_irreducible(T) and cyclic_classes(T)[0] == 1)


def mixing_report(m, l_values, k: int = 1) -> MixingReport:
    ls = sorted(int(l) for l in l_values)
    alphas = [mixing_coefficient(m, l, k) for l in ls]
    return MixingReport(ls, alphas, f"past/future cylinders of length <= {k}", is_star_mixing(m))


def stationarity_check(m, n: int, max_dim: int = ops.DEFAULT_MAX_DIM, tol: float = 1e-8) -> bool:
    """Both one-site truncations of the (n+1)-site marginal reproduce the n-site marginal."""
    d = m.site.dim
    if is_classical(m):
        big = marginal_distribution(m, n + 1).reshape([d] * (n + 1))
        ref = marginal_distribution(m, n)
        drop_last = big.sum(axis=-1).ravel()
        drop_first = big.sum(axis=0).ravel()
    else:
        big = marginal_density(m, n + 1, max_dim)
        ref = marginal_density(m, n, max_dim)
        drop_last = ops.partial_trace(big, [d] * (n + 1), range(n))
        drop_first = ops.partial_trace(big, [d] * (n + 1), range(1, n + 1))
    return bool(np.max(np.abs(drop_last - ref)) <= tol and np.max(np.abs(drop_first - ref)) <= tol)


# -- JSON model files -------------------------------------------------------


def _matrix_field(spec: dict, base: Path, key: str):
    if f"{key}_csv_path" in spec:
        return ops.read_matrix_csv(base / spec[f"{key}_csv_path"])
    if key in spec:
        return np.array(spec[key], dtype=float)
    raise ModelError(f"missing {key}_csv_path")


def model_from_dict(spec: dict, base_dir=".") -> SourceModel:
    """Build a model from a parsed JSON definition.

    Recognized variants: ``classical_iid`` (``p``), ``classical_markov``
    (``T``, optional ``pi``), ``quantum_iid`` (``rho_csv_path``),
    ``quantum_block_iid`` (``rho_csv_path``, ``block_len``) and
    ``finite_mixture`` (``weights``, ``components``).
    """
    base = Path(base_dir)
    variant = spec.get("variant")
    if variant == "classical_iid":
        return ClassicalIID(spec["p"])
    if variant == "classical_markov":
        return ClassicalMarkov(spec["T"], spec.get("pi"))
    if variant == "quantum_iid":
        return QuantumIID(_matrix_field(spec, base, "rho"))
    if variant == "quantum_block_iid":
        return QuantumBlockIID(_matrix_field(spec, base, "rho"), int(spec["block_len"]))
    if variant == "finite_mixture":
        comps = [model_from_dict(c, base) for c in spec["components"]]
        return FiniteMixture(spec["weights"], comps)
    raise ModelError(f"unknown model variant {variant!r}")


def load_model(path) -> SourceModel:
    path = Path(path)
    return model_from_dict(json.loads(path.read_text()), path.parent)
