"""Typical projections of n-site marginals and the slice construction separating
a finite family of null models from one reference model.

Per-site rate of an eigenvalue (or word probability) lam of an n-site
marginal: ``-(1/n) ln lam``, with ``+inf`` for lam = 0.  Classical models are
handled exactly on cell partitions (:mod:`qsanov.cells`) and the results are
:class:`~qsanov.cells.CellProjector` objects; quantum models are materialized
as dense matrices and give :class:`~qsanov.operators.Projector` objects.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models as M
from . import operators as ops
from .cells import CellProjector, CellSpace, cell_space_for
from .divergence import relative_entropy_rate
from .errors import ModelError

ZERO_EIG = 1e-14
RATE_GROUPING_TOL = 1e-9
DEFAULT_ETA = 0.03


@dataclass(frozen=True)
class SpectralWindow:
    """Open rate window ``(center - half_width, center + half_width)``.

    With ``center = inf`` the window keeps zero eigenvalues together with
    every eigenvalue whose rate exceeds ``1 / half_width``.
    """

    center: float
    half_width: float
    n: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")

    def selects(self, rates) -> np.ndarray:
        rates = np.asarray(rates, dtype=float)
        if np.isinf(self.center):
            return rates > 1.0 / self.half_width
        return (rates > self.center - self.half_width) & (rates < self.center + self.half_width)


@dataclass(frozen=True)
class SliceSpec:
    s_values: np.ndarray
    eta: float
    s_ref: float
    intervals: list

    def slice_of(self, rates) -> np.ndarray:
        """Index of the interval containing each rate; ``len(intervals)`` marks the overflow slice."""
        rates = np.asarray(rates, dtype=float)
        out = np.full(rates.shape, -1)
        for i, (a, b) in enumerate(self.intervals):
            out[(rates > a) & (rates <= b) & (out < 0)] = i
        out[(rates > self.intervals[-1][1]) & (out < 0)] = len(self.intervals)
        return out


@dataclass(frozen=True, eq=False)
class SeparatingProjection:
    projector: object
    per_slice: list
    masses: dict
    ref_log_mass: float
    slices: SliceSpec | None = None
    n: int = 0


@dataclass(frozen=True)
class AepMass:
    mass: float
    center: float


@dataclass(frozen=True, eq=False)
class Separation:
    projector: object
    p_mass: float
    q_log_mass: float


# ---- spectra as (basis, rates) ------------------------------------------


@dataclass(frozen=True, eq=False)
class _Spectrum:
    vectors: np.ndarray
    rates: np.ndarray

    def select(self, mask) -> ops.Projector:
        return ops.Projector(self.vectors[:, np.asarray(mask, dtype=bool)])


def _rates_from_eigenvalues(lam, n):
    with np.errstate(divide="ignore"):
        return np.where(lam > ZERO_EIG, -np.log(np.clip(lam, ZERO_EIG, None)) / n, np.inf)


def _dense_spectrum(rho, n: int) -> _Spectrum:
    """Eigenvectors with rates; eigenvalues equal to relative precision 1e-9 share one rate."""
    lam, vec = np.linalg.eigh(ops.as_hermitian(rho))
    lam, vec = lam[::-1], vec[:, ::-1]
    shared = lam.copy()
    start = 0
    for i in range(1, lam.size + 1):
        if i == lam.size or abs(lam[i] - lam[i - 1]) > RATE_GROUPING_TOL * max(abs(lam[i - 1]), ZERO_EIG):
            shared[start:i] = lam[start:i].mean()
            start = i
    return _Spectrum(vec, _rates_from_eigenvalues(shared, n))


def _cell_rates(space: CellSpace, m) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return -space.log_prob(m) / space.n


def model_mass(m, proj, n: int, max_dim: int = ops.DEFAULT_MAX_DIM) -> float:
    """Mass of the n-site marginal of ``m`` on a dense or cell projector."""
    if isinstance(proj, CellProjector):
        return proj.mass(m)
    return ops.expectation(M.marginal_density(m, n, max_dim), proj)


def model_log_mass(m, proj, n: int, max_dim: int = ops.DEFAULT_MAX_DIM) -> float:
    """Natural log of :func:`model_mass`, computed in log space on cells."""
    if isinstance(proj, CellProjector):
        return proj.log_mass(m)
    x = model_mass(m, proj, n, max_dim)
    return -np.inf if x < ZERO_EIG else math.log(x)


def _classical(models) -> bool:
    return all(M.is_classical(m) for m in models)


def _require_ergodic(m):
    if isinstance(m, M.FiniteMixture):
        raise ModelError("expected an ergodic model, got a mixture")


# ---- operations ------------------------------------------------------------


def spectral_typical_projector(phi_n, window: SpectralWindow) -> ops.Projector:
    """Sum of the eigen-projections of ``phi_n`` whose rates fall in ``window``."""
    spec = _dense_spectrum(phi_n, window.n)
    return spec.select(window.selects(spec.rates))


def spectral_typical_cells(space: CellSpace, m, window: SpectralWindow) -> CellProjector:
    return CellProjector(space, window.selects(_cell_rates(space, m)))


def _typical(m, window: SpectralWindow, space=None, max_dim=ops.DEFAULT_MAX_DIM):
    if space is not None:
        return spectral_typical_cells(space, m, window)
    return spectral_typical_projector(M.marginal_density(m, window.n, max_dim), window)


def entropy_typical_projector(m, n: int, delta: float, space: CellSpace | None = None, max_dim: int = ops.DEFAULT_MAX_DIM):
    """Window of half-width ``delta`` around the entropy rate of ``m`` in its own spectrum."""
    _require_ergodic(m)
    if space is None and M.is_classical(m):
        space = cell_space_for([m], n)
    return _typical(m, SpectralWindow(M.entropy_rate(m), delta, n), space, max_dim)


def relative_aep_mass(P, Q, n: int, eps: float, max_dim: int = ops.DEFAULT_MAX_DIM) -> AepMass:
    """Mass of P on the reference window centred at ``s(P) + s(P, Q)``."""
    _require_ergodic(P)
    center = M.entropy_rate(P) + relative_entropy_rate(P, Q).value
    window = SpectralWindow(center, eps, n)
    if _classical([P, Q]):
        space = cell_space_for([P, Q], n)
        return AepMass(spectral_typical_cells(space, Q, window).mass(P), center)
    u = _typical(Q, window, None, max_dim)
    return AepMass(model_mass(P, u, n, max_dim), center)


def maximally_separating_projector(P, Q, n: int, eps: float, delta: float, max_dim: int = ops.DEFAULT_MAX_DIM) -> Separation:
    """supp(u p u) for the P-typical projection p and the reference window u.

    ``q_log_mass`` is ``(1/n) ln Q(projector)``.
    """
    _require_ergodic(P)
    center = M.entropy_rate(P) + relative_entropy_rate(P, Q).value
    window = SpectralWindow(center, eps, n)
    if _classical([P, Q]):
        space = cell_space_for([P, Q], n)
        p = entropy_typical_projector(P, n, delta, space)
        proj = spectral_typical_cells(space, Q, window) & p
    else:
        p = entropy_typical_projector(P, n, delta, max_dim=max_dim)
        proj = ops.compressed_support(_typical(Q, window, None, max_dim), p)
    return Separation(proj, model_mass(P, proj, n, max_dim), model_log_mass(Q, proj, n, max_dim) / n)


def _join(projs):
    if isinstance(projs[0], CellProjector):
        out = projs[0]
        for p in projs[1:]:
            out = out | p
        return out
    return ops.join_projectors(projs)


def _level_set(m, n, level, space, max_dim):
    # eigenvectors (or cells) of m's marginal with rate strictly below level
    if space is not None:
        return CellProjector(space, _cell_rates(space, m) < level)
    spec = _dense_spectrum(M.marginal_density(m, n, max_dim), n)
    return spec.select(spec.rates < level)


def universal_typical_projector(
    omega, n: int, level: float, delta: float | None = None, space: CellSpace | None = None, max_dim: int = ops.DEFAULT_MAX_DIM
):
    """Join of per-member typical projections, each member having entropy rate below ``level``.

    With ``delta`` the members contribute their windows of half-width
    ``delta`` around their own entropy rates.  Without it they contribute
    the level sets ``{rate < level}`` of their marginals, which have
    dimension below ``exp(n * level)`` each.
    """
    omega = list(omega)
    if not omega:
        raise ValueError("empty model family")
    for m in omega:
        _require_ergodic(m)
        if not M.entropy_rate(m) < level:
            raise ModelError(f"entropy rate {M.entropy_rate(m):.6g} is not below level {level:.6g}")
    if space is None and _classical(omega):
        space = cell_space_for(omega, n)
    if delta is None:
        parts = [_level_set(m, n, level, space, max_dim) for m in omega]
    else:
        parts = [entropy_typical_projector(m, n, delta, space, max_dim) for m in omega]
    return _join(parts)


def slice_grid(entropy_rates, s_ref: float, m_slices: int, eta_override: float | None = None) -> SliceSpec:
    """Rate grid and slice intervals for the separating construction.

    Grid points run from the smallest to the largest member entropy rate in
    ``m_slices`` steps of width eta.  When all members share one entropy
    rate there is a single grid point and eta comes from ``eta_override``.
    """
    s_min, s_max = float(min(entropy_rates)), float(max(entropy_rates))
    if m_slices < 1:
        raise ValueError("m_slices must be positive")
    if s_max > s_min:
        eta = (s_max - s_min) / m_slices
        s_values = s_min + eta * np.arange(m_slices + 1)
    else:
        eta = DEFAULT_ETA if eta_override is None else float(eta_override)
        s_values = np.array([s_min])
    if not eta > 0:
        raise ValueError("eta must be positive")
    intervals = [(s + s_ref - eta / 2, s + s_ref + eta / 2) for s in s_values]
    return SliceSpec(s_values, eta, s_ref, intervals)


def slice_sanov_projector(
    omega, Q, n: int, m_slices: int = 4, eta_override: float | None = None, max_dim: int = ops.DEFAULT_MAX_DIM
) -> SeparatingProjection:
    """One projection separating every member of ``omega`` from the reference ``Q``.

    For a finite smallest relative rate s_ref the reference spectrum is cut
    into rate slices of width eta around ``s_i + s_ref``; slice i keeps the
    compressed support of the universal projection at level ``s_i + eta``,
    the last grid level also serving the overflow slice above the grid.
    When every member has infinite relative rate the result is the reference
    window at infinity of half-width eta (``eta_override`` or the default).
    """
    omega = list(omega)
    if not omega:
        raise ValueError("empty model family")
    for m in omega:
        _require_ergodic(m)
    classical = _classical(omega + [Q])
    space = cell_space_for(omega + [Q], n) if classical else None
    s_ref = min(relative_entropy_rate(m, Q).value for m in omega)

    if space is not None:
        q_rates = _cell_rates(space, Q)

        def select(mask):
            return CellProjector(space, mask)

    else:
        q_spec = _dense_spectrum(M.marginal_density(Q, n, max_dim), n)
        q_rates, select = q_spec.rates, q_spec.select

    if np.isinf(s_ref):
        eta = DEFAULT_ETA if eta_override is None else float(eta_override)
        window = SpectralWindow(np.inf, eta, n)
        proj = select(window.selects(q_rates))
        per_slice = [((1.0 / eta, np.inf), proj, proj.log_rank)]
        grid = None
    else:
        grid = slice_grid([M.entropy_rate(m) for m in omega], s_ref, m_slices, eta_override)
        slot = grid.slice_of(q_rates)
        per_slice, ascending = [], None
        for i in range(len(grid.intervals) + 1):
            if i < len(grid.intervals):
                level = grid.s_values[i] + grid.eta
                members = [m for m in omega if M.entropy_rate(m) < level]
                p_i = universal_typical_projector(members, n, level, None, space, max_dim)
                ascending = p_i if ascending is None else _join([ascending, p_i])
                interval = grid.intervals[i]
            else:
                interval = (grid.intervals[-1][1], np.inf)
            u_i = select(slot == i)
            if space is not None:
                r_i = u_i & ascending
            else:
                r_i = ops.compressed_support(u_i, ascending)
            per_slice.append((interval, r_i, r_i.log_rank))
        if space is not None:
            proj = CellProjector(space, np.any([r.mask for _, r, _ in per_slice], axis=0))
        else:
            proj = ops.Projector(np.hstack([r.basis for _, r, _ in per_slice]))

    masses = {i: model_mass(m, proj, n, max_dim) for i, m in enumerate(omega)}
    ref = model_log_mass(Q, proj, n, max_dim) / n
    return SeparatingProjection(proj, per_slice, masses, ref, grid, n)


# ---- serialization ---------------------------------------------------------


def _jsonable(x):
    if isinstance(x, float) and np.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return x


def separating_projection_metadata(sp: SeparatingProjection) -> dict:
    slices = [
        {"interval": [_jsonable(float(a)), _jsonable(float(b))], "log_rank": _jsonable(float(lr))}
        for (a, b), _, lr in sp.per_slice
    ]
    meta = {
        "n": sp.n,
        "masses": {str(k): float(v) for k, v in sp.masses.items()},
        "ref_log_mass": _jsonable(float(sp.ref_log_mass)),
        "slices": slices,
    }
    if sp.slices is not None:
        meta["eta"] = sp.slices.eta
        meta["s_ref"] = _jsonable(float(sp.slices.s_ref))
        meta["s_values"] = [float(s) for s in sp.slices.s_values]
    return meta


def save_separating_projection(sp: SeparatingProjection, path) -> Path:
    """Write the metadata as ``<path>.json`` and, for dense projectors, the matrix as ``<path>.csv``."""
    path = Path(path)
    side = path.with_suffix(".json")
    side.write_text(json.dumps(separating_projection_metadata(sp), indent=2, sort_keys=True) + "\n")
    if isinstance(sp.projector, ops.Projector):
        ops.write_matrix_csv(path.with_suffix(".csv"), sp.projector.matrix)
    return side
