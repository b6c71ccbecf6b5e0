"""Slow, independent reference computations for the test suite."""

from __future__ import annotations

import numpy as np


def brute_force_group_sum(u: np.ndarray, global_id: np.ndarray) -> np.ndarray:
    flat = u.reshape(-1)
    sums: dict[int, float] = {}
    for val, g in zip(flat.tolist(), global_id.tolist()):
        sums[g] = sums.get(g, 0.0) + val
    return np.array([sums[g] for g in global_id.tolist()]).reshape(u.shape)


def reference_derivative_matrices(D: np.ndarray) -> list[np.ndarray]:
    """Dense p^3 x p^3 derivative matrices along r, s, t by explicit loops."""
    p = D.shape[0]
    idx = lambda i, j, k: i + p * (j + p * k)  # noqa: E731
    out = [np.zeros((p**3, p**3)) for _ in range(3)]
    for k in range(p):
        for j in range(p):
            for i in range(p):
                row = idx(i, j, k)
                for m in range(p):
                    out[0][row, idx(m, j, k)] = D[i, m]
                    out[1][row, idx(i, m, k)] = D[j, m]
                    out[2][row, idx(i, j, m)] = D[k, m]
    return out


def element_matrix(D: np.ndarray, g_elem: np.ndarray, Ds=None) -> np.ndarray:
    """sum_ab D_a^T diag(G_ab) D_b for one element, g_elem shaped (p, p, p, 6)."""
    Ds = reference_derivative_matrices(D) if Ds is None else Ds
    G = np.empty((3, 3, g_elem[..., 0].size))
    pairs = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    for m, (a, b) in enumerate(pairs):
        G[a, b] = G[b, a] = g_elem[..., m].reshape(-1)
    A = np.zeros((Ds[0].shape[1],) * 2)
    for a in range(3):
        for b in range(3):
            A += Ds[a].T @ (G[a, b][:, None] * Ds[b])
    return A


def assemble_global(D: np.ndarray, g: np.ndarray, global_id: np.ndarray, n_unique: int) -> np.ndarray:
    """Unique-dof stiffness matrix assembled element by element."""
    E = g.shape[0]
    p3 = g[0, ..., 0].size
    K = np.zeros((n_unique, n_unique))
    gid = global_id.reshape(E, p3)
    Ds = reference_derivative_matrices(D)
    for e in range(E):
        Ae = element_matrix(D, g[e], Ds)
        K[np.ix_(gid[e], gid[e])] += Ae
    return K


def operator_matrix(system, columns=None) -> np.ndarray:
    """Unique-dof matrix of mask(QQ^T A_L) by applying it to continuous unit vectors.

    Only ``columns`` are probed when given; the rest stay zero.
    """
    dm = system.dofmap
    _, first = np.unique(dm.global_id, return_index=True)
    K = np.zeros((dm.n_unique, dm.n_unique))
    for g in range(dm.n_unique) if columns is None else columns:
        e = (dm.global_id == g).astype(system.dtype).reshape(system.field_shape)
        K[:, g] = system.apply(e).reshape(-1)[first]
    return K


def unique_values(u: np.ndarray, dofmap) -> np.ndarray:
    out = np.zeros(dofmap.n_unique)
    out[dofmap.global_id] = u.reshape(-1)
    return out


def interior_ids(dofmap) -> np.ndarray:
    boundary = np.zeros(dofmap.n_unique, dtype=bool)
    boundary[dofmap.global_id[dofmap.dirichlet_mask]] = True
    return np.flatnonzero(~boundary)


def random_continuous(system, rng, masked: bool = True) -> np.ndarray:
    vals = rng.standard_normal(system.dofmap.n_unique)
    u = vals[system.dofmap.global_id].reshape(system.field_shape)
    if masked:
        u = np.where(system.dofmap.dirichlet_mask.reshape(u.shape), 0.0, u)
    return u.astype(system.dtype)
