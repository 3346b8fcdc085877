"""Dense Hermitian operator algebra on finite-dimensional matrix algebras.

Operators are plain 2-D numpy arrays. Projectors are stored by an orthonormal
basis of their range, which keeps joins, compressions and expectations cheap
for the tensor-power dimensions used here (up to a few thousand).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DimensionGuardError,
    DimensionMismatchError,
    NotHermitianError,
    NotPSDError,
)

DEFAULT_MAX_DIM = 4096
HERMITIAN_TOL = 1e-10
HERMITIAN_REJECT_TOL = 1e-8
PSD_CLAMP_TOL = 1e-10
TRACE_TOL = 1e-10
GROUPING_TOL = 1e-9
SUPPORT_TOL = 1e-10


def as_hermitian(a, tol: float = HERMITIAN_REJECT_TOL) -> np.ndarray:
    """Validate a square matrix as Hermitian and return its symmetrized copy."""
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatchError(f"expected a non-empty square matrix, got shape {m.shape}")
    m = m.astype(complex) if np.iscomplexobj(m) else m.astype(float)
    resid = np.max(np.abs(m - m.conj().T))
    if resid > tol:
        raise NotHermitianError(f"symmetry residual {resid:.3e} exceeds {tol:.0e}")
    h = 0.5 * (m + m.conj().T)
    if np.iscomplexobj(h) and np.max(np.abs(h.imag)) == 0.0:
        h = h.real.copy()
    return h


def as_density(a) -> np.ndarray:
    """Validate a density operator: Hermitian, PSD within 1e-10 and unit trace."""
    h = as_hermitian(a)
    lam = np.linalg.eigvalsh(h)
    if lam[0] < -PSD_CLAMP_TOL:
        raise NotPSDError(f"eigenvalue {lam[0]:.3e} below -{PSD_CLAMP_TOL:.0e}")
    tr = float(np.real(np.trace(h)))
    if abs(tr - 1.0) > TRACE_TOL:
        raise NotPSDError(f"trace {tr!r} differs from 1")
    return h


def _check_same_dim(*mats):
    dims = {m.shape[0] for m in mats}
    if len(dims) != 1:
        raise DimensionMismatchError(f"dimension mismatch: {sorted(dims)}")


def _orthonormal_range(vectors: np.ndarray, tol: float = SUPPORT_TOL) -> np.ndarray:
    # Range of vectors @ vectors^*; singular values squared are its eigenvalues.
    dim = vectors.shape[0]
    if vectors.size == 0:
        return np.zeros((dim, 0), dtype=vectors.dtype)
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    return u[:, s**2 > tol]


@dataclass(frozen=True, eq=False)
class Projector:
    """Orthogonal projection, stored via an orthonormal basis of its range."""

    basis: np.ndarray

    @classmethod
    def zero(cls, dim: int, dtype=float) -> "Projector":
        return cls(np.zeros((dim, 0), dtype=dtype))

    @classmethod
    def identity(cls, dim: int) -> "Projector":
        return cls(np.eye(dim))

    @classmethod
    def from_matrix(cls, p, tol: float = 1e-9) -> "Projector":
        m = as_hermitian(p)
        if np.max(np.abs(m @ m - m)) > tol:
            raise NotPSDError("matrix is not idempotent")
        lam, vec = np.linalg.eigh(m)
        return cls(vec[:, lam > 0.5])

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def log_rank(self) -> float:
        return float(np.log(self.rank)) if self.rank else -np.inf

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def complement(self) -> "Projector":
        if self.rank == 0:
            return Projector.identity(self.dim)
        q, _ = np.linalg.qr(self.basis, mode="complete")
        return Projector(q[:, self.rank:])


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Distinct eigenvalues (descending) with their eigenspace bases."""

    eigenvalues: np.ndarray
    bases: list
    grouping_tol: float = GROUPING_TOL

    @cached_property
    def projections(self) -> list:
        return [Projector(b) for b in self.bases]

    def reconstruct(self) -> np.ndarray:
        return sum(lam * p.matrix for lam, p in zip(self.eigenvalues, self.projections))

    def select(self, mask) -> Projector:
        """Sum of the eigen-projections whose group index is selected by ``mask``."""
        chosen = [b for b, keep in zip(self.bases, mask) if keep]
        dim = self.bases[0].shape[0]
        if not chosen:
            return Projector.zero(dim, self.bases[0].dtype)
        return Projector(np.hstack(chosen))


def hermitian_eig(h, grouping_tol: float = GROUPING_TOL) -> SpectralDecomposition:
    """Spectral decomposition with near-degenerate eigenvalues grouped.

    Consecutive eigenvalues closer than ``grouping_tol * max(1, |lambda_max|)``
    share one eigen-projection; the group value is their mean.
    """
    if grouping_tol <= 0:
        raise ValueError("grouping_tol must be positive")
    m = as_hermitian(h)
    lam, vec = np.linalg.eigh(m)
    lam, vec = lam[::-1], vec[:, ::-1]
    scale = grouping_tol * max(1.0, float(np.max(np.abs(lam))))
    breaks = np.flatnonzero(np.abs(np.diff(lam)) > scale) + 1
    groups = np.split(np.arange(lam.size), breaks)
    values = np.array([lam[g].mean() for g in groups])
    return SpectralDecomposition(values, [vec[:, g] for g in groups], grouping_tol)


def _guard(dim: int, max_dim: int):
    if dim > max_dim:
        raise DimensionGuardError(f"dimension {dim} exceeds guard {max_dim}")


def tensor_product(a, b, max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    _guard(a.shape[0] * b.shape[0], max_dim)
    return np.kron(a, b)


def tensor_power(rho, n: int, max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
    """n-fold Kronecker power; ``n = 0`` gives the 1x1 operator [1]."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rho = np.asarray(rho)
    _guard(rho.shape[0] ** n, max_dim)
    out = np.ones((1, 1), dtype=rho.dtype)
    for _ in range(n):
        out = np.kron(out, rho)
    return out


def partial_trace(rho, dims, keep) -> np.ndarray:
    """Trace out every tensor factor whose index is not in ``keep``."""
    rho = np.asarray(rho)
    dims = list(dims)
    keep = sorted(keep)
    k = len(dims)
    t = rho.reshape(dims + dims)
    traced = [i for i in range(k) if i not in keep]
    # Contract one factor at a time, highest index first so axis numbers stay valid.
    for count, i in enumerate(sorted(traced, reverse=True)):
        cur = k - count
        t = np.trace(t, axis1=i, axis2=i + cur)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(d, d)


def support_projector(h, tol: float = SUPPORT_TOL) -> Projector:
    """Projection onto the span of eigenvectors with eigenvalue above ``tol``."""
    m = as_hermitian(h)
    lam, vec = np.linalg.eigh(m)
    if lam[0] < -tol:
        raise NotPSDError(f"eigenvalue {lam[0]:.3e} below -{tol:.0e}")
    return Projector(vec[:, lam > tol])


def join_projectors(ps) -> Projector:
    """Smallest projector dominating every member of ``ps``."""
    ps = list(ps)
    if not ps:
        raise ValueError("join of an empty family")
    _check_same_dim(*(p.basis for p in ps))
    return Projector(_orthonormal_range(np.hstack([p.basis for p in ps])))


def compressed_support(u: Projector, p: Projector) -> Projector:
    """supp(u p u), computed as the range of u applied to a basis of p."""
    _check_same_dim(u.basis, p.basis)
    return Projector(_orthonormal_range(u.matrix @ p.basis))


def expectation(rho, x) -> float:
    """Tr(rho X). Projector arguments give a value clamped to [0, 1]."""
    rho = np.asarray(rho)
    if isinstance(x, Projector):
        _check_same_dim(rho, x.basis)
        if x.rank == 0:
            return 0.0
        b = x.basis
        val = float(np.real(np.sum(b.conj() * (rho @ b))))
        if val < -1e-9 or val > 1 + 1e-9:
            raise ValueError(f"projector expectation {val} outside [0, 1]")
        return min(1.0, max(0.0, val))
    x = np.asarray(x)
    _check_same_dim(rho, x)
    return float(np.real(np.sum(rho * x.T)))


def commutator_norm(a, b) -> float:
    return float(np.max(np.abs(a @ b - b @ a)))


@dataclass(frozen=True)
class CompressionCheck:
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float
    commutes: bool
    c: float = field(default=np.nan)

    def holds(self, slack: float = 1e-9) -> bool:
        return self.lhs1 >= self.rhs1 - slack and self.lhs2 >= self.rhs2 - slack


def compression_estimate_check(tau, p: Projector, q: Projector, u: Projector, c: float | None = None) -> CompressionCheck:
    """Evaluate both sides of the compression estimate for tau, p, q, u.

    ``lhs1 = tau(q p q u)`` against ``tau(p) - 2 sqrt(tau(1 - q)) - tau(1 - u)``,
    and ``Tr(pq)`` against that bound divided by ``c``, where ``D u <= c u``.
    When ``c`` is omitted the smallest admissible value, the top eigenvalue of
    ``u D u``, is used.
    """
    d = np.asarray(tau)
    _check_same_dim(d, p.basis, q.basis, u.basis)
    P, Q, U = p.matrix, q.matrix, u.matrix
    commutes = commutator_norm(U, d) <= 1e-8
    lhs1 = float(np.real(np.trace(d @ Q @ P @ Q @ U)))
    slack_q = max(0.0, 1.0 - expectation(d, q))
    rhs1 = expectation(d, p) - 2.0 * np.sqrt(slack_q) - (1.0 - expectation(d, u))
    lhs2 = float(np.real(np.trace(P @ Q)))
    if c is None:
        c = float(np.linalg.eigvalsh(U @ d @ U)[-1]) if u.rank else 0.0
    elif u.rank and np.linalg.eigvalsh(c * U - U @ d @ U)[0] < -1e-8:
        raise ValueError("D u <= c u fails for the supplied c")
    if c > 0:
        rhs2 = rhs1 / c
    else:
        rhs2 = -np.inf if rhs1 <= 0 else np.inf
    return CompressionCheck(lhs1, float(rhs1), lhs2, float(rhs2), commutes, float(c))


def read_matrix_csv(path) -> np.ndarray:
    """Read a dense matrix: one row per line, ``re,im`` entries separated by ``;``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = []
            for entry in line.split(";"):
                parts = entry.split(",")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: malformed entry {entry!r}")
                try:
                    row.append(complex(float(parts[0]), float(parts[1])))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed entry {entry!r}") from None
            rows.append(row)
    if not rows or any(len(r) != len(rows) for r in rows):
        raise DimensionMismatchError(f"{path}: matrix is not square")
    m = np.array(rows)
    return m.real.copy() if np.all(m.imag == 0) else m


def write_matrix_csv(path, m) -> None:
    m = np.asarray(m, dtype=complex)
    lines = [";".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")


__all__ = [
    "DEFAULT_MAX_DIM",
    "CompressionCheck",
    "Projector",
    "SpectralDecomposition",
    "as_density",
    "as_hermitian",
    "commutator_norm",
    "compressed_support",
    "expectation",
    "hermitian_eig",
    "join_projectors",
    "compression_estimate_check",
    "partial_trace",
    "read_matrix_csv",
    "support_projector",
    "tensor_power",
    "tensor_product",
    "write_matrix_csv",
]
