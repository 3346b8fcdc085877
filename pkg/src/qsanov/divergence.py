"""Entropies, relative entropies and their per-site rates (natural logs throughout)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models as M
from . import operators as ops
from .errors import DimensionMismatchError, ModelError

# Eigenvalues of the reference below this count as outside its support.
SUPPORT_EIG_TOL = 1e-14
# Weight of the null state allowed outside the reference support.
SUPPORT_MASS_TOL = 1e-9
SLOPE_RESIDUAL_FLAG = 1e-3


def von_neumann_entropy(rho) -> float:
    lam = np.clip(np.linalg.eigvalsh(np.asarray(rho)), 0.0, None)
    lam = lam[lam > 0]
    return float(max(0.0, -np.sum(lam * np.log(lam))))


def _reference_weights(psi, phi):
    # eigenvalues of phi and the weight psi puts on each eigenvector
    psi, phi = np.asarray(psi), np.asarray(phi)
    if psi.shape != phi.shape:
        raise DimensionMismatchError(f"shapes {psi.shape} and {phi.shape} differ")
    lam, vec = np.linalg.eigh(phi)
    w = np.real(np.sum(vec.conj() * (psi @ vec), axis=0))
    return lam, np.clip(w, 0.0, None)


def cross_term(psi, phi) -> float:
    """-Tr(D_psi log D_phi); +inf when psi leaves the support of phi."""
    lam, w = _reference_weights(psi, phi)
    inside = lam > SUPPORT_EIG_TOL
    if w[~inside].sum() > SUPPORT_MASS_TOL:
        return np.inf
    return float(-np.sum(w[inside] * np.log(lam[inside])))


def relative_entropy(psi, phi) -> float:
    """Umegaki relative entropy ``Tr D_psi (log D_psi - log D_phi)``, or +inf."""
    cross = cross_term(psi, phi)
    if np.isinf(cross):
        return np.inf
    return max(0.0, cross - von_neumann_entropy(psi))


def kl_divergence(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shapes {p.shape} and {q.shape} differ")
    on = p > 0
    if np.any(q[on] <= 0):
        return np.inf
    return float(max(0.0, np.sum(p[on] * np.log(p[on] / q[on]))))


def measured_relative_entropy_lb(psi, phi) -> float:
    """Relative entropy of the outcome statistics of a projective measurement adapted to phi.

    The measurement refines each eigenspace of phi by the eigenbasis of
    psi compressed to it.  Every outcome projector commutes with phi, so the
    value never exceeds :func:`relative_entropy`; it is exact when psi and
    phi commute, degenerate reference spectra included.
    """
    phi = ops.as_hermitian(phi)
    psi = ops.as_hermitian(psi)
    if psi.shape != phi.shape:
        raise DimensionMismatchError(f"shapes {psi.shape} and {phi.shape} differ")
    spec = ops.hermitian_eig(phi)
    p, q = [], []
    for lam, P in zip(spec.eigenvalues, spec.projections):
        V = P.basis
        w = np.linalg.eigvalsh(V.conj().T @ psi @ V)
        p.extend(np.clip(w, 0.0, None))
        q.extend([lam if lam > SUPPORT_EIG_TOL else 0.0] * w.size)
    return kl_divergence(p, np.clip(q, 0.0, None))


@dataclass(frozen=True)
class RateResult:
    value: float
    method: str
    n_used: int = 0
    residual: float = 0.0

    @property
    def converged(self) -> bool:
        return self.residual <= SLOPE_RESIDUAL_FLAG


def _markov_rate(P: M.ClassicalMarkov, Q: M.ClassicalMarkov) -> float:
    if np.any((P.pi > 0) & (Q.pi <= 0)):
        return np.inf
    total = 0.0
    for i in np.flatnonzero(P.pi > 0):
        row = kl_divergence(P.T[i], Q.T[i])
        if np.isinf(row):
            return np.inf
        total += P.pi[i] * row
    return float(total)


def finite_relative_entropy(P, Q, n: int, max_dim: int = ops.DEFAULT_MAX_DIM) -> float:
    """S(P^(n), Q^(n)) on materialized marginals (exact cells for classical pairs)."""
    if M.is_classical(P) and M.is_classical(Q):
        from .cells import cell_space_for

        space = cell_space_for([P, Q], n)
        lp, lq = space.log_prob(P), space.log_prob(Q)
        mass = np.exp(space.log_mult + lp)
        on = mass > 0
        if np.any(np.isneginf(lq[on])):
            return np.inf
        return float(max(0.0, np.sum(mass[on] * (lp[on] - lq[on]))))
    return relative_entropy(M.marginal_density(P, n, max_dim), M.marginal_density(Q, n, max_dim))


def relative_entropy_rate(P, Q, n_max: int = 8, max_dim: int = ops.DEFAULT_MAX_DIM) -> RateResult:
    """Per-site relative entropy rate s(P, Q).

    Closed forms cover iid/iid pairs (classical or quantum), matching
    block-iid pairs and classical Markov pairs (iid counts as Markov).
    Other pairs fall back to the least-squares slope of ``S(P^(n), Q^(n))``
    over ``n = n_max//2 .. n_max``.
    """
    if isinstance(P, M.FiniteMixture):
        raise ModelError("null model is a mixture; use underline_s")
    if P.site.dim != Q.site.dim:
        raise DimensionMismatchError("models live on different site algebras")
    classical = (M.ClassicalIID, M.ClassicalMarkov)
    if isinstance(P, M.ClassicalIID) and isinstance(Q, M.ClassicalIID):
        return RateResult(kl_divergence(P.p, Q.p), "closed_form_iid")
    if isinstance(P, classical) and isinstance(Q, classical):
        return RateResult(_markov_rate(M.as_markov(P), M.as_markov(Q)), "closed_form_markov")
    iid = (M.ClassicalIID, M.QuantumIID)
    if isinstance(P, iid) and isinstance(Q, iid):
        return RateResult(relative_entropy(M.as_quantum(P).rho, M.as_quantum(Q).rho), "closed_form_iid")
    if (
        isinstance(P, M.QuantumBlockIID)
        and isinstance(Q, M.QuantumBlockIID)
        and P.block_len == Q.block_len
    ):
        return RateResult(relative_entropy(P.rho_block, Q.rho_block) / P.block_len, "closed_form_iid")
    if n_max < 4:
        raise ValueError("slope estimate needs n_max >= 4")
    ns = np.arange(max(1, n_max // 2), n_max + 1)
    vals = []
    for n in ns:
        v = finite_relative_entropy(P, Q, int(n), max_dim)
        if np.isinf(v):
            return RateResult(np.inf, "finite_n_slope", int(n), 0.0)
        vals.append(v)
    A = np.column_stack([ns, np.ones(ns.size)])
    coef, *_ = np.linalg.lstsq(A, np.array(vals), rcond=None)
    resid = float(np.max(np.abs(A @ coef - vals)))
    return RateResult(max(0.0, float(coef[0])), "finite_n_slope", int(n_max), resid)


def _positive_components(P, block_len: int):
    comps = M.ergodic_components(P, block_len)
    return [(w, c) for w, c in comps if w > 0]


def underline_s(P, Q, block_len: int = 1, n_max: int = 8) -> float:
    """Smallest relative entropy rate over the positive-weight ergodic components of P."""
    Qb = M.block_transform(Q, block_len)
    rates = [
        relative_entropy_rate(c, Qb, n_max).value / block_len
        for _, c in _positive_components(P, block_len)
    ]
    return float(min(rates))


def overline_s(P, block_len: int = 1) -> float:
    """Largest entropy rate over the positive-weight ergodic components of P."""
    return float(max(M.entropy_rate(c) / block_len for _, c in _positive_components(P, block_len)))
