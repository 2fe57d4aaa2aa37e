"""Cone definitions, Euclidean projections, and projection derivatives.

Supported blocks: the zero cone, free space, the nonnegative orthant, and
second-order cones.  Zero and free are each other's duals; the orthant and
second-order cones are self-dual.  The embedding projection maps onto
R^n x K* x R_+, the set used by the homogeneous self-dual embedding.

At nonsmooth points a deterministic subgradient selection is returned: the
orthant uses the strict mask (v > 0), and a second-order cone point with
||x|| = |t| uses the boundary-formula limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "ZERO",
    "FREE",
    "NONNEG",
    "SOC",
    "ConeBlock",
    "ConeSpec",
    "dual_block",
    "project",
    "dproject",
    "project_dual_cone",
    "dproject_dual_cone",
    "project_embedding",
    "dproject_embedding",
    "embedding_jacobian",
    "smooth_margin",
]

ZERO = "zero"
FREE = "free"
NONNEG = "nonneg"
SOC = "soc"


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in (ZERO, FREE, NONNEG, SOC):
            raise ShapeError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ShapeError(f"cone block dimension must be >= 1, got {self.dim}")


def dual_block(block: ConeBlock) -> ConeBlock:
    if block.kind == ZERO:
        return ConeBlock(FREE, block.dim)
    if block.kind == FREE:
        return ConeBlock(ZERO, block.dim)
    return block  # nonneg and soc are self-dual


@dataclass(frozen=True)
class ConeSpec:
    """Row counts of the cone K = {0}^n_zero x R^n_nonneg_+ x SOC(d1) x ..."""

    n_zero: int = 0
    n_nonneg: int = 0
    soc_dims: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_zero < 0 or self.n_nonneg < 0:
            raise ShapeError("cone row counts must be nonnegative")
        if any(d < 1 for d in self.soc_dims):
            raise ShapeError("second-order cone dims must be >= 1")

    @property
    def total_dim(self) -> int:
        return self.n_zero + self.n_nonneg + sum(self.soc_dims)

    def blocks(self) -> list[ConeBlock]:
        out = []
        if self.n_zero:
            out.append(ConeBlock(ZERO, self.n_zero))
        if self.n_nonneg:
            out.append(ConeBlock(NONNEG, self.n_nonneg))
        out.extend(ConeBlock(SOC, d) for d in self.soc_dims)
        return out

    def dual_blocks(self) -> list[ConeBlock]:
        return [dual_block(b) for b in self.blocks()]


# ---------------------------------------------------------------------------
# Single-block projections

def _project_soc(v: np.ndarray) -> np.ndarray:
    t, x = v[0], v[1:]
    nx = np.linalg.norm(x)
    if nx <= t:
        return v.copy()
    if nx <= -t:
        return np.zeros_like(v)
    alpha = 0.5 * (t + nx)
    out = np.empty_like(v)
    out[0] = alpha
    out[1:] = (alpha / nx) * x
    return out


def _dproject_soc(v: np.ndarray, dv: np.ndarray) -> np.ndarray:
    t, x = v[0], v[1:]
    nx = np.linalg.norm(x)
    if nx < t:
        return dv.copy()
    if nx < -t:
        return np.zeros_like(dv)
    if nx == 0.0:
        # t == 0 as well: apex of the cone; symmetric deterministic selection.
        return 0.5 * dv
    # Boundary formula, also used as the limit on the nonsmooth set nx == |t|.
    u = x / nx
    dt, dx = dv[0], dv[1:]
    ut_dx = float(u @ dx)
    out = np.empty_like(dv)
    out[0] = 0.5 * (dt + ut_dx)
    out[1:] = 0.5 * (dt + ut_dx) * u + (0.5 * (t + nx) / nx) * (dx - ut_dx * u)
    return out


def _jac_soc(v: np.ndarray) -> np.ndarray:
    d = v.size
    t, x = v[0], v[1:]
    nx = np.linalg.norm(x)
    if nx < t:
        return np.eye(d)
    if nx < -t:
        return np.zeros((d, d))
    if nx == 0.0:
        return 0.5 * np.eye(d)
    u = x / nx
    J = np.empty((d, d))
    J[0, 0] = 0.5
    J[0, 1:] = 0.5 * u
    J[1:, 0] = 0.5 * u
    J[1:, 1:] = (0.5 * (t + nx) / nx) * (np.eye(d - 1) - np.outer(u, u)) \
        + 0.5 * np.outer(u, u)
    return J


def project(block: ConeBlock, v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the block's cone."""
    v = np.asarray(v, dtype=float)
    if v.shape != (block.dim,):
        raise ShapeError(f"expected vector of length {block.dim}, got {v.shape}")
    if block.kind == ZERO:
        return np.zeros_like(v)
    if block.kind == FREE:
        return v.copy()
    if block.kind == NONNEG:
        return np.maximum(v, 0.0)
    if block.dim == 1:
        return np.maximum(v, 0.0)  # degenerate second-order cone is a halfline
    return _project_soc(v)


def dproject(block: ConeBlock, v: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Directional derivative of ``project`` at v along dv."""
    v = np.asarray(v, dtype=float)
    dv = np.asarray(dv, dtype=float)
    if v.shape != (block.dim,) or dv.shape != (block.dim,):
        raise ShapeError(f"expected vectors of length {block.dim}")
    if block.kind == ZERO:
        return np.zeros_like(dv)
    if block.kind == FREE:
        return dv.copy()
    if block.kind == NONNEG or block.dim == 1:
        return np.where(v > 0.0, dv, 0.0)
    return _dproject_soc(v, dv)


def _block_jacobian(block: ConeBlock, v: np.ndarray) -> np.ndarray:
    if block.kind == ZERO:
        return np.zeros((block.dim, block.dim))
    if block.kind == FREE:
        return np.eye(block.dim)
    if block.kind == NONNEG or block.dim == 1:
        return np.diag((v > 0.0).astype(float))
    return _jac_soc(v)


# ---------------------------------------------------------------------------
# Dual cone and embedding projections

def _apply_blocks(blocks, v, fn):
    out = np.empty_like(v, dtype=float)
    off = 0
    for b in blocks:
        out[off:off + b.dim] = fn(b, v[off:off + b.dim])
        off += b.dim
    if off != v.size:
        raise ShapeError(f"cone blocks cover {off} rows, vector has {v.size}")
    return out


def project_dual_cone(v: np.ndarray, spec: ConeSpec) -> np.ndarray:
    """Projection of an m-vector onto K*."""
    v = np.asarray(v, dtype=float)
    return _apply_blocks(spec.dual_blocks(), v, project)


def dproject_dual_cone(v: np.ndarray, dv: np.ndarray, spec: ConeSpec) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    dv = np.asarray(dv, dtype=float)
    out = np.empty_like(dv)
    off = 0
    for b in spec.dual_blocks():
        out[off:off + b.dim] = dproject(b, v[off:off + b.dim], dv[off:off + b.dim])
        off += b.dim
    if off != v.size:
        raise ShapeError(f"cone blocks cover {off} rows, vector has {v.size}")
    return out


def project_embedding(z: np.ndarray, spec: ConeSpec, n: int) -> np.ndarray:
    """Projection onto R^n x K* x R_+ (the embedding's product set)."""
    z = np.asarray(z, dtype=float)
    m = spec.total_dim
    if z.size != n + m + 1:
        raise ShapeError(f"expected length {n + m + 1}, got {z.size}")
    out = np.empty_like(z)
    out[:n] = z[:n]
    out[n:n + m] = project_dual_cone(z[n:n + m], spec)
    out[n + m] = max(z[n + m], 0.0)
    return out


def dproject_embedding(z: np.ndarray, dz: np.ndarray, spec: ConeSpec, n: int) -> np.ndarray:
    """Directional derivative of ``project_embedding`` at z along dz."""
    z = np.asarray(z, dtype=float)
    dz = np.asarray(dz, dtype=float)
    m = spec.total_dim
    if z.size != n + m + 1 or dz.size != n + m + 1:
        raise ShapeError(f"expected length {n + m + 1}")
    out = np.empty_like(dz)
    out[:n] = dz[:n]
    out[n:n + m] = dproject_dual_cone(z[n:n + m], dz[n:n + m], spec)
    out[n + m] = dz[n + m] if z[n + m] > 0.0 else 0.0
    return out


def embedding_jacobian(z: np.ndarray, spec: ConeSpec, n: int) -> np.ndarray:
    """Dense Jacobian of the embedding projection (block diagonal)."""
    z = np.asarray(z, dtype=float)
    m = spec.total_dim
    N = n + m + 1
    if z.size != N:
        raise ShapeError(f"expected length {N}, got {z.size}")
    J = np.zeros((N, N))
    J[:n, :n] = np.eye(n)
    off = n
    for b in spec.dual_blocks():
        J[off:off + b.dim, off:off + b.dim] = _block_jacobian(b, z[off:off + b.dim])
        off += b.dim
    J[N - 1, N - 1] = 1.0 if z[N - 1] > 0.0 else 0.0
    return J


def embedding_jacobian_diagonal(z: np.ndarray, spec: ConeSpec, n: int) -> np.ndarray:
    """Diagonal of the embedding-projection Jacobian at z.

    Exact except that second-order-cone boundary blocks contribute only
    their diagonal (the off-diagonal part is rank two per block); intended
    as a preconditioner for systems involving the full Jacobian.
    """
    z = np.asarray(z, dtype=float)
    m = spec.total_dim
    N = n + m + 1
    if z.size != N:
        raise ShapeError(f"expected length {N}, got {z.size}")
    diag = np.ones(N)
    off = n
    for b in spec.dual_blocks():
        part = z[off:off + b.dim]
        if b.kind == ZERO:
            diag[off:off + b.dim] = 0.0
        elif b.kind == FREE:
            pass
        elif b.kind == NONNEG or b.dim == 1:
            diag[off:off + b.dim] = (part > 0.0).astype(float)
        else:
            t, x = part[0], part[1:]
            nx = np.linalg.norm(x)
            if nx < t:
                pass
            elif nx < -t:
                diag[off:off + b.dim] = 0.0
            elif nx == 0.0:
                diag[off:off + b.dim] = 0.5
            else:
                u2 = (x / nx) ** 2
                beta = 0.5 * (t + nx) / nx
                diag[off] = 0.5
                diag[off + 1:off + b.dim] = beta + (0.5 - beta) * u2
        off += b.dim
    diag[N - 1] = 1.0 if z[N - 1] > 0.0 else 0.0
    return diag


def smooth_margin(z: np.ndarray, spec: ConeSpec, n: int) -> float:
    """Distance of z from the nonsmooth set of the embedding projection.

    Positive margins mean every dual-cone block sits strictly inside a
    differentiability region: orthant entries away from 0, second-order
    blocks away from the ||x|| = |t| boundary pair, and w away from 0.
    """
    z = np.asarray(z, dtype=float)
    m = spec.total_dim
    margin = abs(z[n + m])
    off = n
    for b in spec.dual_blocks():
        part = z[off:off + b.dim]
        if b.kind == NONNEG or (b.kind == SOC and b.dim == 1):
            margin = min(margin, float(np.min(np.abs(part))) if part.size else margin)
        elif b.kind == SOC:
            t, x = part[0], part[1:]
            margin = min(margin, abs(np.linalg.norm(x) - abs(t)))
        off += b.dim
    return float(margin)
