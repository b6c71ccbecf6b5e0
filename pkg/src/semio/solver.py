"""Unpreconditioned conjugate gradient on the SEM operator.

The loop follows the fused schedule: the p-update streams straight into
the operator, gather-scatter and masking run on w, the p.w reduction
reloads p and w, and the x/r updates share one pass with the rho
reduction.  Per iteration the ledger books

    stored: 13n + 2n + 3n + 2n + 2 n_gs = 20n + 2 n_gs words
    remat:   8n + 2n + 3n + 2n + 2 n_gs = 15n + 2 n_gs words
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import SpectralBasis, build_basis
from .gather import GsMap, build_gsmap, gather_scatter, mask_dirichlet
from .ledger import (KERNEL_AXPY, KERNEL_P_UPDATE, KERNEL_REDUCTION, TERM_C, TERM_RELOAD,
                     TERM_SEM, TERM_X, Counter, Ledger)
from .mesh import DofMap, HexMesh, build_dofmap
from .operator import GeomFactors, apply_local, geometric_factors, operator_flops

VARIANTS = ("stored", "remat")
PRECISIONS = {32: np.float32, 64: np.float64}

# flops per point per iteration outside the operator:
# p-update 2, two c-weighted reductions 3 each, x-update 2, r-update 2
CG_VECTOR_FLOPS = 12


class SolverError(RuntimeError):
    pass


class OperatorNotSPDError(SolverError):
    pass


class DivergenceError(SolverError):
    pass


@dataclass
class SemSystem:
    mesh: HexMesh
    basis: SpectralBasis
    dofmap: DofMap
    gsmap: GsMap
    geom: GeomFactors
    variant: str = "stored"
    precision: int = 64

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be 32 or 64, got {self.precision!r}")
        self._basis = self.basis.astype(self.dtype)
        self._geom = self.geom.astype(self.dtype)

    @classmethod
    def build(cls, mesh: HexMesh, order: int, variant: str = "stored", precision: int = 64) -> "SemSystem":
        basis = build_basis(order)
        dofmap = build_dofmap(mesh, order)
        return cls(mesh, basis, dofmap, build_gsmap(dofmap),
                   geometric_factors(mesh, basis, dofmap), variant, precision)

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    @property
    def n(self) -> int:
        return self.dofmap.n

    @property
    def field_shape(self):
        return self.dofmap.field_shape

    def zeros(self) -> np.ndarray:
        return np.zeros(self.field_shape, dtype=self.dtype)

    def apply_local(self, u, ledger=None, *, streamed_input=False):
        return apply_local(self.variant)(u, self._geom, self._basis, ledger,
                                         streamed_input=streamed_input)

    def apply(self, u, ledger=None, *, streamed_input=False):
        """mask(QQ^T A_L u)."""
        w = self.apply_local(u, ledger, streamed_input=streamed_input)
        return mask_dirichlet(gather_scatter(w, self.gsmap, ledger), self.dofmap)

    def iteration_words(self) -> int:
        n, n_gs = self.n, self.gsmap.traffic_count
        return (20 if self.variant == "stored" else 15) * n + 2 * n_gs

    def gather_flops(self) -> int:
        return self.gsmap.traffic_count - self.gsmap.n_groups

    def iteration_flops(self) -> int:
        """Exact per-iteration flops booked by cg_solve, gather-scatter adds included."""
        E, N = self.mesh.num_elements, self.basis.order
        return operator_flops(self.variant, E, N) + CG_VECTOR_FLOPS * self.n + self.gather_flops()


@dataclass
class SolveStats:
    iterations: int
    rho_history: list[float]
    converged: bool
    ledger: Ledger
    setup_ledger: Ledger
    iteration_words: list[int] = field(default_factory=list)
    iteration_flops: list[int] = field(default_factory=list)
    wall_time: float = 0.0

    def as_dict(self, timing: bool = False) -> dict:
        out = {
            "iterations": self.iterations,
            "converged": self.converged,
            "rho_history": [float(r) for r in self.rho_history],
            "iteration_words": self.iteration_words,
            "iteration_flops": self.iteration_flops,
            "ledger": self.ledger.as_dict(),
            "setup_ledger": self.setup_ledger.as_dict(),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


def _weighted_sum(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    return float(np.dot(a.reshape(-1).astype(np.float64) * b.reshape(-1), c))


def cg_solve(system: SemSystem, b: np.ndarray, x0: np.ndarray | None = None,
             rel_tol: float = 1e-8, max_iter: int = 1000,
             callback: Callable[[int, np.ndarray], None] | None = None) -> tuple[np.ndarray, SolveStats]:
    """Solve mask(QQ^T A_L) x = b for a masked, continuous b.

    Stops once rho_i <= rel_tol^2 rho_0 or after max_iter iterations.
    ``callback(i, x)`` sees every iterate, starting with x0.
    """
    if not rel_tol > 0:
        raise ValueError("rel_tol must be positive")
    dt = system.dtype
    n = system.n
    c = system.dofmap.inv_mult
    word_bytes = np.dtype(dt).itemsize
    setup = Ledger(word_bytes)
    ledger = Ledger(word_bytes)
    t0 = time.perf_counter()

    b = np.asarray(b, dtype=dt).reshape(system.field_shape)
    x = system.zeros() if x0 is None else np.array(x0, dtype=dt).reshape(system.field_shape)
    r = b - system.apply(x, setup)
    p = system.zeros()
    rho = _weighted_sum(r, r, c)
    if not np.isfinite(rho):
        raise DivergenceError("non-finite initial residual")
    rho0 = rho
    history = [rho]
    beta = 0.0
    if callback is not None:
        callback(0, x)

    words, flops = [], []
    converged = rho <= rel_tol**2 * rho0
    i = 0
    while not converged and i < max_iter:
        i += 1
        before = ledger.snapshot()
        # the p-update streams into the operator
        p = r + dt(beta) * p
        ledger.charge(KERNEL_P_UPDATE, TERM_SEM, read=2 * n, written=n, flops=2 * n)
        w = system.apply(p, ledger, streamed_input=True)
        # reload p and w after gather-scatter
        pw = _weighted_sum(p, w, c)
        ledger.charge(KERNEL_REDUCTION, TERM_RELOAD, read=2 * n, flops=3 * n)
        ledger.charge(KERNEL_REDUCTION, TERM_C, read=n)
        if not np.isfinite(pw):
            raise DivergenceError(f"non-finite <p, w, c> at iteration {i}")
        if pw <= 0:
            raise OperatorNotSPDError(f"<p, w, c> = {pw:g} <= 0 at iteration {i}")
        alpha = history[-1] / pw
        # x update, r update and rho reduction share one pass
        x = x + dt(alpha) * p
        ledger.charge(KERNEL_AXPY, TERM_X, read=2 * n, written=n, flops=2 * n)
        r = r - dt(alpha) * w
        rho = _weighted_sum(r, r, c)
        ledger.charge(KERNEL_AXPY, TERM_SEM, read=2 * n, written=n, flops=2 * n + 3 * n)
        ledger.charge(KERNEL_AXPY, TERM_C, read=n)
        if not np.isfinite(rho):
            raise DivergenceError(f"non-finite rho at iteration {i}")
        beta = rho / history[-1]
        history.append(rho)
        step = _diff(ledger.snapshot(), before)
        words.append(step.words)
        flops.append(step.flops)
        if callback is not None:
            callback(i, x)
        converged = rho <= rel_tol**2 * rho0

    stats = SolveStats(i, history, bool(converged), ledger, setup, words, flops,
                       time.perf_counter() - t0)
    return x, stats


def _diff(after: Counter, before: Counter) -> Counter:
    return Counter(after.words_read - before.words_read,
                   after.words_written - before.words_written,
                   after.flops - before.flops)


def node_coordinates(system: SemSystem) -> np.ndarray:
    """Physical coordinates of every local point, shape (E, p, p, p, 3)."""
    nodes = system.basis.nodes
    phi = np.stack([(1.0 - nodes) / 2.0, (1.0 + nodes) / 2.0], axis=1)
    X = system.mesh.corners().reshape(-1, 2, 2, 2, 3)
    return np.einsum("kd,jb,ia,edbac->ekjic", phi, phi, phi, X)


def assemble_rhs(system: SemSystem, f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Masked, gathered load vector with entries f(x) w |J| per local point."""
    xyz = node_coordinates(system)
    fx = np.asarray(f(xyz[..., 0], xyz[..., 1], xyz[..., 2]), dtype=np.float64)
    fx = np.broadcast_to(fx, system.field_shape)
    b = gather_scatter(fx * system.geom.jw, system.gsmap)
    return mask_dirichlet(b, system.dofmap).astype(system.dtype)


def manufactured_solution(x, y, z):
    return np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)


def manufactured_forcing(x, y, z):
    return 3.0 * np.pi**2 * manufactured_solution(x, y, z)


def solution_errors(system: SemSystem, x: np.ndarray, exact=manufactured_solution) -> dict:
    xyz = node_coordinates(system)
    err = np.asarray(x, dtype=np.float64) - exact(xyz[..., 0], xyz[..., 1], xyz[..., 2])
    l2 = np.sqrt(np.sum(err * err * system.geom.jw))
    return {"linf": float(np.abs(err).max()), "l2": float(l2)}
