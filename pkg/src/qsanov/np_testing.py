"""Neyman-Pearson tests: smallest reference mass at a given null-mass constraint.

For a null state psi and reference phi the optimum over operator tests
0 <= T <= 1 with Tr(psi T) >= 1 - eps is attained by a threshold test: the
positive-part projection of ``psi - t phi`` plus a fractional weight on the
boundary.  Values are natural logs of reference masses; a vanishing reference
mass is reported as ``-inf``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import models as M
from . import operators as ops
from .cells import CellSpace, cell_space_for, iid_type_space
from .divergence import finite_relative_entropy, relative_entropy, relative_entropy_rate
from .errors import DimensionGuardError, DimensionMismatchError, ModelError

ZERO_MASS = 1e-14
THRESHOLD_TOL = 1e-12
MASS_TOL = 1e-12
BRUTEFORCE_MAX = 20
VIOLATION_TOL = 1e-6
DEFAULT_GAP_TOL = 0.05


@dataclass(frozen=True)
class TestOutcome:
    value: float
    type1_error: float
    threshold_t: float
    randomization_gamma: float
    kind: str

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class BetaPair:
    relaxed: TestOutcome
    deterministic: TestOutcome


@dataclass(frozen=True)
class HpProbeReport:
    n_values: list
    beta_over_n: list
    target: float
    final_gap: float
    verdict: str
    relaxed: list = field(default_factory=list, repr=False)
    undercut: bool = False
    converse_over_n: list = field(default_factory=list)


def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")


def _log_mass(x: float) -> float:
    return -np.inf if x < ZERO_MASS else math.log(min(x, 1.0))


def converse_from_entropy(s: float, type1_error: float) -> float:
    """Lower bound on ln Phi(T) for any test with Psi-error <= type1_error, given S(psi, phi) = s."""
    if np.isinf(s) or type1_error >= 1.0:
        return -np.inf
    return -(s + math.log(2.0)) / (1.0 - max(type1_error, 0.0))


def converse_bound(psi, phi, eps: float) -> float:
    """Data-processing converse ``-(S(psi, phi) + ln 2) / (1 - eps)``."""
    return converse_from_entropy(relative_entropy(psi, phi), eps)


# ---- dense operator tests ------------------------------------------------


class _ThresholdFamily:
    """Eigen-data of psi - t*phi with cached evaluations."""

    def __init__(self, psi, phi):
        self.psi = ops.as_hermitian(psi)
        self.phi = ops.as_hermitian(phi)
        if self.psi.shape != self.phi.shape:
            raise DimensionMismatchError(f"shapes {self.psi.shape} and {self.phi.shape} differ")
        self._cache = {}

    def eig(self, t: float):
        if t not in self._cache:
            lam, vec = np.linalg.eigh(self.psi - t * self.phi)
            order = np.argsort(-lam, kind="stable")
            lam, vec = lam[order], vec[:, order]
            w_psi = np.real(np.sum(vec.conj() * (self.psi @ vec), axis=0))
            w_phi = np.real(np.sum(vec.conj() * (self.phi @ vec), axis=0))
            self._cache[t] = (lam, vec, np.clip(w_psi, 0, None), np.clip(w_phi, 0, None))
        return self._cache[t]

    def mass(self, t: float) -> float:
        # Psi-mass of the closed threshold projection {psi - t phi >= 0}
        lam, _, w_psi, _ = self.eig(t)
        scale = max(1.0, t) * 1e-13
        return float(w_psi[lam >= -scale].sum())


def _find_threshold(fam: _ThresholdFamily, target: float) -> float:
    """Largest t (to within 1e-12) whose closed threshold projection keeps Psi-mass >= target.

    Illinois false position on ln t inside a maintained bracket, with a
    bisection step whenever the bracket fails to halve.  Falls back to a
    64-point grid if the sampled mass is not monotone.
    """
    lam_psi = np.linalg.eigvalsh(fam.psi)
    lam_phi = np.linalg.eigvalsh(fam.phi)
    pos = lam_phi[lam_phi > ops.SUPPORT_TOL]
    hi = float(lam_psi[-1] / pos[0] + 1.0) if pos.size else 1.0
    if fam.mass(hi) >= target:
        return hi
    lo = 0.0
    m_lo = fam.mass(lo)
    if m_lo < target:
        return lo
    # f_lo, f_hi are the secant weights (halved by the Illinois rule);
    # m_lo keeps the true mass at lo for the monotonicity check.
    f_lo, f_hi = m_lo - target, fam.mass(hi) - target
    side = 0
    while hi - lo > THRESHOLD_TOL * max(1.0, hi) and m_lo - target > MASS_TOL:
        width = hi - lo
        mid = lo + (hi - lo) * f_lo / (f_lo - f_hi)
        if not lo < mid < hi:
            mid = 0.5 * (lo + hi)
        for step in (mid, None):
            if step is None:
                if hi - lo <= 0.5 * width:
                    break
                step = 0.5 * (lo + hi)
            m_mid = fam.mass(step)
            if m_mid > m_lo + 1e-9:
                return _grid_threshold(fam, target, lo, hi)
            if m_mid >= target:
                lo, m_lo, f_lo = step, m_mid, m_mid - target
                if side == 1:
                    f_hi *= 0.5
                side = 1
            else:
                hi, f_hi = step, m_mid - target
                if side == -1:
                    f_lo *= 0.5
                side = -1
    return lo


def _grid_threshold(fam: _ThresholdFamily, target: float, lo: float, hi: float) -> float:
    grid = np.linspace(lo, hi, 64)
    ok = [t for t in grid if fam.mass(t) >= target]
    return float(max(ok)) if ok else lo


def _complement_shortcut(fam: _ThresholdFamily, target: float):
    # Psi-mass outside the support of phi is free of reference cost.
    lam, vec = np.linalg.eigh(fam.phi)
    out = vec[:, lam <= ops.SUPPORT_TOL]
    if out.shape[1] == 0:
        return None
    m_out = float(np.real(np.sum(out.conj() * (fam.psi @ out))))
    if m_out + MASS_TOL < target:
        return None
    return ops.Projector(out), m_out


def _diagonal(a) -> bool:
    a = np.asarray(a)
    return bool(np.all(a == np.diag(np.diag(a))))


def np_relaxed_beta(psi, phi, eps: float) -> TestOutcome:
    """Optimal randomized test: ln of the least reference mass at null mass >= 1 - eps."""
    _check_eps(eps)
    if _diagonal(psi) and _diagonal(phi):
        return classical_beta_vectors(np.real(np.diag(psi)), np.real(np.diag(phi)), eps).relaxed
    fam = _ThresholdFamily(psi, phi)
    target = 1.0 - eps
    if _complement_shortcut(fam, target) is not None:
        return TestOutcome(-np.inf, eps, np.inf, target / _complement_shortcut(fam, target)[1], "relaxed")
    t = _find_threshold(fam, target)
    lam, _, w_psi, w_phi = fam.eig(t)
    cum = np.cumsum(w_psi)
    k = int(np.searchsorted(cum, target - MASS_TOL))
    k = min(k, lam.size - 1)
    before = cum[k - 1] if k > 0 else 0.0
    gamma = 0.0 if w_psi[k] <= 0 else float(np.clip((target - before) / w_psi[k], 0.0, 1.0))
    phi_mass = float(w_phi[:k].sum() + gamma * w_phi[k])
    achieved = before + gamma * w_psi[k]
    return TestOutcome(_log_mass(phi_mass), float(max(0.0, 1.0 - achieved)), t, gamma, "relaxed")


def np_projection_beta(psi, phi, eps: float):
    """Deterministic projection rounding of the optimal threshold test.

    Keeps the strictly positive part of ``psi - t* phi`` and adds the
    remaining eigenvectors, boundary ones first, in ascending reference
    weight until the null mass reaches ``1 - eps``.

    Returns
    -------
    (TestOutcome, Projector)
    """
    _check_eps(eps)
    fam = _ThresholdFamily(psi, phi)
    target = 1.0 - eps
    short = _complement_shortcut(fam, target)
    if short is not None:
        proj, m_out = short
        return TestOutcome(-np.inf, max(0.0, 1.0 - m_out), np.inf, 0.0, "projection"), proj
    t = _find_threshold(fam, target)
    lam, vec, w_psi, w_phi = fam.eig(t)
    scale = max(1.0, t) * 1e-13
    strict = lam > scale
    boundary = np.flatnonzero(np.abs(lam) <= scale)
    negative = np.flatnonzero(lam < -scale)
    chosen = list(np.flatnonzero(strict))
    mass = float(w_psi[strict].sum())
    extra = list(boundary[np.lexsort((boundary, w_phi[boundary]))]) + list(negative)
    for j in extra:
        if mass >= target - MASS_TOL:
            break
        chosen.append(j)
        mass += w_psi[j]
    chosen = sorted(chosen)
    proj = ops.Projector(vec[:, chosen])
    p_mass = ops.expectation(fam.psi, proj)
    q_mass = ops.expectation(fam.phi, proj)
    return TestOutcome(_log_mass(q_mass), max(0.0, 1.0 - p_mass), t, 0.0, "projection"), proj


# ---- classical tests -------------------------------------------------------


def _sorted_cells(lp, lq, log_mult):
    # Drop cells without null mass, then order by log-likelihood ratio
    # (descending), ties by ascending reference weight, then index.
    keep = np.flatnonzero(np.isfinite(lp) & np.isfinite(log_mult))
    with np.errstate(invalid="ignore"):
        llr = lp[keep] - lq[keep]
    order = np.lexsort((keep, lq[keep], -llr))
    return keep[order]


def _cell_betas(lp, lq, log_mult, eps: float) -> BetaPair:
    target = 1.0 - eps
    idx = _sorted_cells(lp, lq, log_mult)
    lp, lq, lm = lp[idx], lq[idx], log_mult[idx]
    p_cell = np.exp(lm + lp)
    cum = np.cumsum(p_cell)
    k = int(np.searchsorted(cum, target - MASS_TOL))
    k = min(k, idx.size - 1)
    before = float(cum[k - 1]) if k > 0 else 0.0
    lq_cell = lm + lq
    log_before = logsumexp(lq_cell[:k]) if k > 0 else -np.inf
    t = float(np.exp(lp[k] - lq[k])) if np.isfinite(lq[k]) else np.inf
    remaining = max(0.0, target - before)

    gamma = float(np.clip(remaining / p_cell[k], 0.0, 1.0)) if p_cell[k] > 0 else 0.0
    relaxed_log = np.logaddexp(log_before, math.log(gamma) + lq_cell[k]) if gamma > 0 else log_before
    relaxed = TestOutcome(
        float(relaxed_log), float(max(0.0, 1.0 - before - gamma * p_cell[k])), t, gamma, "relaxed"
    )

    # whole words from the boundary cell
    if remaining <= 0:
        words_log, words_mass = -np.inf, 0.0
    else:
        log_x = math.log(remaining) - lp[k]
        if log_x > 30:
            words_log = log_x
        else:
            words = math.ceil(math.exp(log_x) * (1 - 1e-12))
            words = min(words, int(round(math.exp(lm[k]))) if lm[k] < 30 else words)
            words_log = math.log(words) if words > 0 else -np.inf
        words_mass = float(np.exp(words_log + lp[k])) if np.isfinite(words_log) else 0.0
    det_log = np.logaddexp(log_before, words_log + lq[k]) if np.isfinite(words_log) else log_before
    frac = float(np.exp(words_log - lm[k])) if np.isfinite(words_log) else 0.0
    deterministic = TestOutcome(
        float(det_log), float(max(0.0, 1.0 - before - words_mass)), t, min(frac, 1.0), "subset"
    )
    return BetaPair(relaxed, deterministic)


def _as_log(x):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def classical_beta_vectors(p, q, eps: float) -> BetaPair:
    """Relaxed and greedy-deterministic tests for two distributions on one finite set."""
    _check_eps(eps)
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shapes {p.shape} and {q.shape} differ")
    return _cell_betas(_as_log(p), _as_log(q), np.zeros(p.size), eps)


def classical_beta_cells(P, Q, n: int, eps: float, space: CellSpace | None = None) -> BetaPair:
    """Tests between the n-site marginals of two classical models, computed on exact cells."""
    _check_eps(eps)
    space = space or cell_space_for([P, Q], n)
    return _cell_betas(space.log_prob(P), space.log_prob(Q), space.log_mult, eps)


def classical_beta_iid_types(P, Q, n: int, eps: float) -> BetaPair:
    """Tests between iid marginals grouped by letter-count type.

    The relaxed value is the exact randomized optimum.  The deterministic
    value takes whole types in likelihood-ratio order plus as many words of
    the boundary type as needed; it is feasible and within one word's
    reference mass of the greedy optimum.
    """
    if not (isinstance(P, M.ClassicalIID) and isinstance(Q, M.ClassicalIID)):
        raise ModelError("type computation needs two ClassicalIID models")
    if P.site.dim != Q.site.dim:
        raise DimensionMismatchError("alphabets differ")
    if P.site.dim == 2 and n > 16384:
        raise DimensionGuardError(f"n={n} exceeds the binary type guard 16384")
    return classical_beta_cells(P, Q, n, eps, iid_type_space(P.site.dim, n))


def classical_beta_bruteforce(p, q, eps: float) -> TestOutcome:
    """Exact minimum of ln q(M) over all subsets M with p(M) >= 1 - eps."""
    _check_eps(eps)
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shapes {p.shape} and {q.shape} differ")
    if p.size > BRUTEFORCE_MAX:
        raise DimensionGuardError(f"alphabet {p.size} exceeds brute-force limit {BRUTEFORCE_MAX}")
    pm, qm = np.zeros(1), np.zeros(1)
    for pi, qi in zip(p, q):
        # subset masks enumerated with letter i as bit i
        pm, qm = np.concatenate([pm, pm + pi]), np.concatenate([qm, qm + qi])
    feasible = pm >= 1.0 - eps - MASS_TOL
    best = int(np.flatnonzero(feasible)[np.argmin(qm[feasible])])
    return TestOutcome(_log_mass(qm[best]), float(max(0.0, 1.0 - pm[best])), np.nan, 0.0, "subset")


def bruteforce_subset(p, q, eps: float) -> tuple:
    """The minimizing subset of :func:`classical_beta_bruteforce` as a tuple of letters."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    best, best_q = (), np.inf
    for r in range(p.size + 1):
        for sub in itertools.combinations(range(p.size), r):
            s = list(sub)
            if p[s].sum() >= 1.0 - eps - MASS_TOL and q[s].sum() < best_q:
                best, best_q = sub, q[s].sum()
    return best


# ---- probe -----------------------------------------------------------------


def relaxed_beta_models(P, Q, n: int, eps: float, max_dim: int = ops.DEFAULT_MAX_DIM) -> TestOutcome:
    """Relaxed optimum between n-site marginals, on cells when both models are classical."""
    if M.is_classical(P) and M.is_classical(Q):
        return classical_beta_cells(P, Q, n, eps).relaxed
    return np_relaxed_beta(M.marginal_density(P, n, max_dim), M.marginal_density(Q, n, max_dim), eps)


def hp_probe(
    P, Q, eps: float, n_values, tolerance: float = DEFAULT_GAP_TOL, max_dim: int = ops.DEFAULT_MAX_DIM
) -> HpProbeReport:
    """Compare relaxed beta/n against -s(P, Q) along ``n_values``.

    At finite n the optimal value may sit below the asymptotic target by a
    vanishing amount (already ``ln(1 - eps) / n`` when P = Q); such points
    set ``undercut``.  ``violated`` is reserved for values that undercut the
    target by more than 1e-6 *and* fall below the finite-n converse floor
    ``-(S(P^(n), Q^(n)) + ln 2) / (1 - type-I error)``, which no correct
    test can do.  ``consistent`` means not violated with a final gap within
    ``tolerance``.
    """
    _check_eps(eps)
    ns = sorted(int(n) for n in n_values)
    if not ns or ns[0] < 1:
        raise ValueError("n_values must be positive")
    target = 0.0 - relative_entropy_rate(P, Q).value
    outcomes = [relaxed_beta_models(P, Q, n, eps, max_dim) for n in ns]
    ratios = [o.value / n for o, n in zip(outcomes, ns)]
    floors = [
        converse_from_entropy(finite_relative_entropy(P, Q, n, max_dim), o.type1_error) / n
        for o, n in zip(outcomes, ns)
    ]
    final_gap = abs(ratios[-1] - target) if np.isfinite(target) else (0.0 if ratios[-1] == target else np.inf)
    below = [np.isfinite(target) and r < target - VIOLATION_TOL for r in ratios]
    if any(b and r < f - VIOLATION_TOL for b, r, f in zip(below, ratios, floors)):
        verdict = "violated"
    elif final_gap <= tolerance:
        verdict = "consistent"
    else:
        verdict = "inconclusive"
    return HpProbeReport(ns, ratios, target, float(final_gap), verdict, outcomes, any(below), floors)
