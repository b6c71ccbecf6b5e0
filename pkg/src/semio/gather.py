"""Direct stiffness summation (QQ^T), Dirichlet masking and c-weighted dots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ledger import KERNEL_GS, TERM_GS, Ledger
from .mesh import DofMap


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class GsMap:
    global_id: np.ndarray
    n_unique: int
    shared: np.ndarray  # ascending local indices with multiplicity > 1
    n_groups: int

    @property
    def traffic_count(self) -> int:
        """n_gs: local points that take part in a group."""
        return int(self.shared.size)

    @property
    def n(self) -> int:
        return int(self.global_id.size)

    def groups(self) -> list[np.ndarray]:
        gid = self.global_id[self.shared]
        order = np.argsort(gid, kind="stable")
        cuts = np.flatnonzero(np.diff(gid[order])) + 1
        return np.split(self.shared[order], cuts)


def build_gsmap(dofmap: DofMap) -> GsMap:
    shared = np.flatnonzero(dofmap.multiplicity > 1)
    n_groups = int(np.unique(dofmap.global_id[shared]).size)
    return GsMap(dofmap.global_id, dofmap.n_unique, shared, n_groups)


def _flat(u: np.ndarray, n: int) -> np.ndarray:
    if u.size != n:
        raise ShapeError(f"field has {u.size} entries, map expects {n}")
    return u.reshape(-1)


def gather_scatter(u: np.ndarray, gs: GsMap, ledger: Ledger | None = None) -> np.ndarray:
    """Replace every shared point by the sum over its group.

    Sums accumulate in ascending local index order, so repeated runs are
    bitwise identical.  Points with multiplicity 1 are copied untouched.
    """
    flat = _flat(u, gs.n)
    # bincount accumulates sequentially in input order, in float64
    sums = np.bincount(gs.global_id[gs.shared], weights=flat[gs.shared], minlength=gs.n_unique)
    out = flat.copy()
    out[gs.shared] = sums[gs.global_id[gs.shared]].astype(flat.dtype)
    if ledger is not None:
        ledger.charge(KERNEL_GS, TERM_GS, read=gs.traffic_count, written=gs.traffic_count,
                      flops=gs.traffic_count - gs.n_groups)
    return out.reshape(u.shape)


def mask_dirichlet(u: np.ndarray, dofmap: DofMap) -> np.ndarray:
    flat = _flat(u, dofmap.n).copy()
    flat[dofmap.dirichlet_mask] = 0
    return flat.reshape(u.shape)


def dot3(a: np.ndarray, b: np.ndarray, dofmap: DofMap) -> float:
    """Sum of a * b * c with c the inverse multiplicity, accumulated in float64."""
    fa = _flat(a, dofmap.n).astype(np.float64, copy=False)
    fb = _flat(b, dofmap.n).astype(np.float64, copy=False)
    return float(np.dot(fa * fb, dofmap.inv_mult))
