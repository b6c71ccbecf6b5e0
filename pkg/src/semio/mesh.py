"""Hexahedral box meshes and global point numbering.

Element corners are stored in lexicographic reference order, x fastest::

    corner c = a + 2*b + 4*d   for reference offsets (a, b, d) in {0, 1}^3

so corner 0 sits at (-1, -1, -1) and corner 7 at (+1, +1, +1) of the
reference cube.  Local points inside an element are ordered the same way:
a field is an array of shape (E, N+1, N+1, N+1) indexed ``[e, k, j, i]``
with i (the x/r direction) fastest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MESH_FORMAT = "semio-hexmesh"
MESH_VERSION = 1


class MeshError(ValueError):
    pass


class InvertedElementError(MeshError):
    pass


@dataclass(frozen=True)
class HexMesh:
    vertices: np.ndarray  # (V, 3)
    elements: np.ndarray  # (E, 8) vertex indices
    shape: tuple[int, int, int]  # element lattice extents (ex, ey, ez)
    bbox: np.ndarray = field(repr=False)  # (2, 3) lower/upper bounds

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def corners(self) -> np.ndarray:
        """Corner coordinates per element, shape (E, 8, 3)."""
        return self.vertices[self.elements]

    def to_dict(self) -> dict:
        return {
            "format": MESH_FORMAT,
            "version": MESH_VERSION,
            "shape": list(self.shape),
            "bbox": self.bbox.tolist(),
            "vertices": self.vertices.tolist(),
            "elements": self.elements.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HexMesh":
        if doc.get("format") != MESH_FORMAT:
            raise MeshError(f"not a {MESH_FORMAT} document")
        if doc.get("version") != MESH_VERSION:
            raise MeshError(f"unsupported mesh version {doc.get('version')!r}")
        vertices = np.asarray(doc["vertices"], dtype=np.float64).reshape(-1, 3)
        elements = np.asarray(doc["elements"], dtype=np.int64).reshape(-1, 8)
        mesh = cls(vertices, elements, tuple(int(s) for s in doc["shape"]),
                   np.asarray(doc["bbox"], dtype=np.float64))
        _check_elements(mesh)
        return mesh


def _check_elements(mesh: HexMesh) -> None:
    ex, ey, ez = mesh.shape
    if mesh.num_elements != ex * ey * ez:
        raise MeshError(f"{mesh.num_elements} elements do not fill a {ex}x{ey}x{ez} lattice")
    for e, conn in enumerate(mesh.elements):
        if len(set(conn.tolist())) != 8:
            raise MeshError(f"element {e} does not reference 8 distinct vertices")
    if mesh.elements.min() < 0 or mesh.elements.max() >= mesh.num_vertices:
        raise MeshError("element references a missing vertex")


def save_mesh(mesh: HexMesh, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mesh.to_dict()), encoding="utf-8")


def load_mesh(path: str | Path) -> HexMesh:
    return HexMesh.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _vertex_id(ix, iy, iz, shape):
    ex, ey, _ = shape
    return ix + (ex + 1) * (iy + (ey + 1) * iz)


def box_mesh(ex: int, ey: int, ez: int, bounds=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))) -> HexMesh:
    shape = (ex, ey, ez)
    if any((not isinstance(s, (int, np.integer))) or s < 1 for s in shape):
        raise MeshError(f"element extents must be positive integers, got {shape}")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if np.any(hi <= lo):
        raise MeshError("box bounds must satisfy lower < upper on every axis")

    axes = [np.linspace(lo[d], hi[d], shape[d] + 1) for d in range(3)]
    gz, gy, gx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    iz, iy, ix = np.meshgrid(np.arange(ez), np.arange(ey), np.arange(ex), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    elements = np.stack(
        [_vertex_id(ix + a, iy + b, iz + d, shape)
         for d in (0, 1) for b in (0, 1) for a in (0, 1)],
        axis=1,
    ).astype(np.int64)
    return HexMesh(vertices, elements, shape, np.stack([lo, hi]))


def deform_affine(mesh: HexMesh, matrix, shift=(0.0, 0.0, 0.0)) -> HexMesh:
    """Apply x -> matrix @ x + shift to every vertex."""
    A = np.asarray(matrix, dtype=np.float64).reshape(3, 3)
    b = np.asarray(shift, dtype=np.float64).reshape(3)
    det = np.linalg.det(A)
    if not det > 0:
        raise InvertedElementError(f"affine map has determinant {det:g}; elements would invert")
    vertices = mesh.vertices @ A.T + b
    return HexMesh(vertices, mesh.elements.copy(), mesh.shape,
                   np.stack([vertices.min(axis=0), vertices.max(axis=0)]))


def permute_elements(mesh: HexMesh, rng: np.random.Generator) -> HexMesh:
    """Shuffle element storage order; connectivity and numbering are unchanged."""
    perm = rng.permutation(mesh.num_elements)
    return HexMesh(mesh.vertices, mesh.elements[perm], mesh.shape, mesh.bbox)


@dataclass(frozen=True)
class DofMap:
    order: int
    global_id: np.ndarray  # (n,) int64
    n_unique: int
    multiplicity: np.ndarray  # (n,) int64
    inv_mult: np.ndarray  # (n,) float64
    dirichlet_mask: np.ndarray  # (n,) bool
    lattice: np.ndarray = field(repr=False)  # (n, 3) global lattice coordinates

    @property
    def n(self) -> int:
        return len(self.global_id)

    @property
    def field_shape(self) -> tuple[int, int, int, int]:
        p = self.order + 1
        return (self.n // p**3, p, p, p)

    @property
    def n_boundary_unique(self) -> int:
        return int(np.unique(self.global_id[self.dirichlet_mask]).size)


def element_lattice_origin(mesh: HexMesh) -> np.ndarray:
    """Lattice index (ix, iy, iz) of every element, recovered from its corner 0."""
    ex, ey, ez = mesh.shape
    v0 = mesh.elements[:, 0]
    ix = v0 % (ex + 1)
    iy = (v0 // (ex + 1)) % (ey + 1)
    iz = v0 // ((ex + 1) * (ey + 1))
    origin = np.stack([ix, iy, iz], axis=1)
    expected = np.stack(
        [_vertex_id(ix + a, iy + b, iz + d, mesh.shape)
         for d in (0, 1) for b in (0, 1) for a in (0, 1)],
        axis=1,
    )
    if np.any(ix >= ex) or np.any(iy >= ey) or np.any(iz >= ez) or np.any(expected != mesh.elements):
        raise MeshError("mesh connectivity is not a structured box lattice")
    return origin


def build_dofmap(mesh: HexMesh, order: int) -> DofMap:
    if order < 1:
        raise MeshError(f"order must be >= 1, got {order}")
    N = order
    ex, ey, ez = mesh.shape
    origin = element_lattice_origin(mesh)
    loc = np.arange(N + 1)
    k, j, i = np.meshgrid(loc, loc, loc, indexing="ij")
    local = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)  # (p^3, 3), i fastest
    lattice = (origin[:, None, :] * N + local[None, :, :]).reshape(-1, 3)
    dims = np.array([ex * N + 1, ey * N + 1, ez * N + 1])
    gid = lattice[:, 0] + dims[0] * (lattice[:, 1] + dims[1] * lattice[:, 2])
    n_unique = int(np.prod(dims))
    counts = np.bincount(gid, minlength=n_unique)
    mult = counts[gid]
    on_boundary = np.any((lattice == 0) | (lattice == dims - 1), axis=1)
    return DofMap(N, gid.astype(np.int64), n_unique, mult.astype(np.int64),
                  1.0 / mult, on_boundary, lattice)
