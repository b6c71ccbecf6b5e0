"""Geometric factors and the matrix-free local Laplacian A_L.

Two kernels produce the same w = D^T G D u per element:

* stored: streams the six precomputed entries of G per point.
* remat: streams a single scalar per point and rebuilds G from the
  element's eight corner coordinates, which stay resident per element.
  The Jacobian is recovered by differentiating the coordinate field with
  the same tensor contractions used on u, and G is formed from its
  cofactor matrix so no division happens inside the kernel.

Flops are counted one per multiply and one per add; a 1D contraction over
N+1 points costs 2(N+1) per output point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import SpectralBasis
from .gather import ShapeError
from .ledger import KERNEL_OPERATOR, TERM_SEM, Ledger
from .mesh import DofMap, HexMesh, InvertedElementError, MeshError

# (row, col) of the six stored entries of the symmetric G
G_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@dataclass(frozen=True)
class GeomFactors:
    g: np.ndarray  # (E, p, p, p, 6)
    jinv: np.ndarray  # (E, 3, 3)
    jw: np.ndarray  # (E, p, p, p): w_i w_j w_k |J|
    rw: np.ndarray  # (E, p, p, p): w_i w_j w_k / |J|, the remat stream
    corners: np.ndarray  # (E, 8, 3), resident per element in the remat kernel

    def astype(self, dtype) -> "GeomFactors":
        return GeomFactors(*(a.astype(dtype) for a in
                             (self.g, self.jinv, self.jw, self.rw, self.corners)))

    def g_matrix(self) -> np.ndarray:
        """Full symmetric 3x3 form of g, shape (E, p, p, p, 3, 3)."""
        G = np.empty(self.g.shape[:-1] + (3, 3), dtype=self.g.dtype)
        for m, (a, b) in enumerate(G_INDEX):
            G[..., a, b] = self.g[..., m]
            G[..., b, a] = self.g[..., m]
        return G

    def reconstruct_g(self) -> np.ndarray:
        """Rebuild g from (jinv, jw)."""
        K = np.einsum("eac,ebc->eab", self.jinv, self.jinv)
        return np.stack([self.jw * K[:, a, b, None, None, None] for a, b in G_INDEX], axis=-1)


def _linear_shape(nodes: np.ndarray) -> np.ndarray:
    return np.stack([(1.0 - nodes) / 2.0, (1.0 + nodes) / 2.0], axis=1)


def _affine_jacobian(corners: np.ndarray, rtol: float) -> np.ndarray:
    """Constant Jacobian dx_a/dxi_b of each affine element, shape (E, 3, 3).

    Columns are half the edge vectors from corner 0; every other corner
    must agree with the resulting affine map.
    """
    origin = corners[:, 0]
    J = np.stack([corners[:, 1] - origin, corners[:, 2] - origin, corners[:, 4] - origin], axis=-1) / 2.0
    offsets = np.array([[a, b, d] for d in (0, 1) for b in (0, 1) for a in (0, 1)], dtype=np.float64)
    predicted = origin[:, None, :] + 2.0 * np.einsum("eab,cb->eca", J, offsets)
    mismatch = np.abs(predicted - corners).max(axis=(1, 2))
    scale = np.abs(J).max(axis=(1, 2))
    if np.any(mismatch > rtol * scale):
        e = int(np.argmax(mismatch / scale))
        raise MeshError(f"element {e} is not affine; only linearly deformed elements are supported")
    return J


def geometric_factors(mesh: HexMesh, basis: SpectralBasis, dofmap: DofMap | None = None,
                      affine_rtol: float = 1e-10) -> GeomFactors:
    p = basis.npts
    corners = mesh.corners()
    if dofmap is not None and dofmap.n != len(corners) * p**3:
        raise ShapeError("dofmap does not match mesh and basis")
    J = _affine_jacobian(corners, affine_rtol)
    det = np.linalg.det(J)
    bad = np.flatnonzero(det <= 0)
    if bad.size:
        raise InvertedElementError(f"element {int(bad[0])} has a nonpositive Jacobian determinant")

    w = basis.weights
    w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]  # [k, j, i]
    jinv = np.linalg.inv(J)
    K = np.einsum("eac,ebc->eab", jinv, jinv)
    jw = w3[None] * det[:, None, None, None]
    rw = w3[None] / det[:, None, None, None]
    g = np.stack([jw * K[:, a, b, None, None, None] for a, b in G_INDEX], axis=-1)
    return GeomFactors(g, jinv, jw, rw, corners.copy())


def _check(u: np.ndarray, gf: GeomFactors) -> np.ndarray:
    E, p = gf.jw.shape[0], gf.jw.shape[1]
    if u.size != E * p**3:
        raise ShapeError(f"field has {u.size} entries, operator expects {E * p**3}")
    return u.reshape(E, p, p, p)


def _grad(u: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    E, p = u.shape[0], u.shape[1]
    ur = u @ D.T
    us = D @ u
    ut = (D @ u.reshape(E, p, p * p)).reshape(u.shape)
    return ur, us, ut


def _grad_t(wr: np.ndarray, ws: np.ndarray, wt: np.ndarray, D: np.ndarray) -> np.ndarray:
    E, p = wr.shape[0], wr.shape[1]
    Dt = D.T
    return wr @ D + Dt @ ws + (Dt @ wt.reshape(E, p, p * p)).reshape(wr.shape)


def _apply_g(G, ur, us, ut):
    g11, g12, g13, g22, g23, g33 = G
    wr = g11 * ur + g12 * us + g13 * ut
    ws = g12 * ur + g22 * us + g23 * ut
    wt = g13 * ur + g23 * us + g33 * ut
    return wr, ws, wt


def stored_operator_flops(E: int, N: int) -> int:
    p = N + 1
    return E * p**3 * (12 * p + 15)


def remat_operator_flops(E: int, N: int) -> int:
    """Exact remat kernel count: n(30(N+1) + 87) + E(18(N+1)^2 + 36(N+1))."""
    p = N + 1
    return E * p**3 * (30 * p + 87) + E * (18 * p * p + 36 * p)


def apply_local_stored(u: np.ndarray, gf: GeomFactors, basis: SpectralBasis,
                       ledger: Ledger | None = None, *, streamed_input: bool = False) -> np.ndarray:
    """w = D^T G D u with G read from memory.

    ``streamed_input`` marks u as arriving from a fused producer, so its
    read is not charged.
    """
    ue = _check(u, gf)
    E, N = ue.shape[0], basis.order
    D = basis.diff.astype(ue.dtype, copy=False)
    ur, us, ut = _grad(ue, D)
    G = np.moveaxis(gf.g.astype(ue.dtype, copy=False), -1, 0)
    w = _grad_t(*_apply_g(G, ur, us, ut), D)
    if ledger is not None:
        n = ue.size
        ledger.charge(KERNEL_OPERATOR, TERM_SEM, read=(0 if streamed_input else n) + 6 * n,
                      written=n, flops=stored_operator_flops(E, N))
    return w.reshape(u.shape)


def remat_g(gf: GeomFactors, basis: SpectralBasis, dtype=None) -> np.ndarray:
    """The six G entries rebuilt from corners and the remat stream, (6, E, p, p, p)."""
    dtype = dtype or gf.rw.dtype
    nodes = basis.nodes.astype(dtype, copy=False)
    D = basis.diff.astype(dtype, copy=False)
    E, p = gf.rw.shape[0], gf.rw.shape[1]
    phi = _linear_shape(nodes)
    X = gf.corners.astype(dtype, copy=False).reshape(E, 2, 2, 2, 3)
    X = np.moveaxis(X, -1, 0)  # [coord, e, d, b, a]
    # coordinate field on the GLL points by three 1D passes
    X = X @ phi.T  # [c, e, d, b, i]
    X = np.einsum("jb,cedbi->cedji", phi, X)
    X = np.einsum("kd,cedji->cekji", phi, X)
    # J[a][b] = d x_a / d xi_b
    J = [_grad(X[c], D) for c in range(3)]
    # cofactors: C[a][b] = J[a+1][b+1] J[a+2][b+2] - J[a+1][b+2] J[a+2][b+1]
    C = [[J[(a + 1) % 3][(b + 1) % 3] * J[(a + 2) % 3][(b + 2) % 3]
          - J[(a + 1) % 3][(b + 2) % 3] * J[(a + 2) % 3][(b + 1) % 3]
          for b in range(3)] for a in range(3)]
    s = gf.rw.astype(dtype, copy=False)
    # G = (w / |J|) C^T C
    return np.stack([s * (C[0][a] * C[0][b] + C[1][a] * C[1][b] + C[2][a] * C[2][b])
                     for a, b in G_INDEX])


def apply_local_remat(u: np.ndarray, gf: GeomFactors, basis: SpectralBasis,
                      ledger: Ledger | None = None, *, streamed_input: bool = False) -> np.ndarray:
    """w = D^T G D u with G rematerialized per point."""
    ue = _check(u, gf)
    E, N = ue.shape[0], basis.order
    D = basis.diff.astype(ue.dtype, copy=False)
    G = remat_g(gf, basis, ue.dtype)
    ur, us, ut = _grad(ue, D)
    w = _grad_t(*_apply_g(G, ur, us, ut), D)
    if ledger is not None:
        n = ue.size
        ledger.charge(KERNEL_OPERATOR, TERM_SEM, read=(0 if streamed_input else n) + n,
                      written=n, flops=remat_operator_flops(E, N))
    return w.reshape(u.shape)


def operator_flops(variant: str, E: int, N: int) -> int:
    if variant == "stored":
        return stored_operator_flops(E, N)
    if variant == "remat":
        return remat_operator_flops(E, N)
    raise ValueError(f"unknown variant {variant!r}")


def apply_local(variant: str):
    if variant == "stored":
        return apply_local_stored
    if variant == "remat":
        return apply_local_remat
    raise ValueError(f"unknown variant {variant!r}")
