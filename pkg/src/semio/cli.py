"""Command-line front end.

    semio solve      run a CG solve and report stats, ledger and errors
    semio analyze    evaluate the cost model for (E, N, i, machine, variant)
    semio model      evaluate the I/O lower bounds
    semio reconcile  solve, then audit the ledger against the model

Exit codes: 0 ok, 2 invalid configuration, 3 solver breakdown.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .iomodel import (PRESETS, ModelError, ProblemSpec, bound_report, cost_report, intensity_remat,
                      intensity_stored, load_machine, n_gs_count, reconcile, remat_work_ratios,
                      work_counts)
from .mesh import MeshError, box_mesh, deform_affine, load_mesh, permute_elements, save_mesh
from .solver import (SemSystem, SolverError, assemble_rhs, cg_solve, manufactured_forcing,
                     solution_errors)

SCHEMA_VERSION = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _solve_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ex", type=int, default=2)
    p.add_argument("--ey", type=int, default=2)
    p.add_argument("--ez", type=int, default=2)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--variant", choices=("stored", "remat"), default="stored")
    p.add_argument("--precision", type=int, choices=(32, 64), default=64)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--permute", action="store_true", help="shuffle element storage order (uses --seed)")
    p.add_argument("--affine", type=float, nargs="+", metavar="A",
                   help="9 matrix entries, row major, optionally followed by a 3-vector shift")
    p.add_argument("--mms", action="store_true", help="manufactured solution sin(pi x)sin(pi y)sin(pi z)")
    p.add_argument("--rhs-file", type=Path, help=".npy local field used as the right-hand side")
    p.add_argument("--mesh-file", type=Path, help="read the mesh from a JSON document")
    p.add_argument("--export-mesh", type=Path, help="write the mesh used to a JSON document")
    p.add_argument("--timing", action="store_true", help="include wall-clock time (breaks bitwise reproducibility)")


def _output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", type=Path)
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--elements", type=int, default=32768)
    p.add_argument("--order", type=int, default=7)
    p.add_argument("--iters", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run a CG solve")
    _solve_args(p)
    _output_args(p)

    p = sub.add_parser("analyze", help="evaluate the cost model")
    _model_args(p)
    p.add_argument("--variant", choices=("stored", "remat"), default="stored")
    p.add_argument("--precision", type=int, choices=(32, 64), default=64)
    p.add_argument("--machine", default="fpga-fp64-stored", help="preset name or machine JSON file")
    _output_args(p)

    p = sub.add_parser("model", help="evaluate the I/O lower bounds")
    _model_args(p)
    p.add_argument("--fast-mem", type=float, default=0.0, help="fast memory size S in words")
    p.add_argument("--m", type=float, help="I/O cost of evaluating Ax, in words")
    _output_args(p)

    p = sub.add_parser("reconcile", help="solve and audit the ledger against the model")
    _solve_args(p)
    p.add_argument("--machine", default="fpga-fp64-stored", help="preset name or machine JSON file")
    _output_args(p)
    return parser


def _validate(args) -> None:
    if args.command in ("solve", "reconcile"):
        for flag in ("ex", "ey", "ez"):
            if getattr(args, flag) < 1:
                raise ConfigError(f"--{flag}", "must be >= 1")
        if args.order < 1:
            raise ConfigError("--order", "must be >= 1")
        if not args.tol > 0:
            raise ConfigError("--tol", "must be positive")
        if args.max_iter < 0:
            raise ConfigError("--max-iter", "must be >= 0")
        if args.affine is not None and len(args.affine) not in (9, 12):
            raise ConfigError("--affine", "expects 9 matrix entries or 12 values with a shift")
        if args.mms and args.rhs_file is not None:
            raise ConfigError("--rhs-file", "cannot be combined with --mms")
        if args.mms and (args.affine is not None or args.mesh_file is not None):
            raise ConfigError("--mms", "the manufactured solution needs the undeformed unit box")
        if args.rhs_file is not None and not args.rhs_file.is_file():
            raise ConfigError("--rhs-file", f"no such file {args.rhs_file}")
        if args.mesh_file is not None and not args.mesh_file.is_file():
            raise ConfigError("--mesh-file", f"no such file {args.mesh_file}")
    else:
        if args.elements < 1:
            raise ConfigError("--elements", "must be >= 1")
        if args.order < 1:
            raise ConfigError("--order", "must be >= 1")
        if args.iters < 0:
            raise ConfigError("--iters", "must be >= 0")
        if args.command == "model" and args.fast_mem < 0:
            raise ConfigError("--fast-mem", "must be >= 0")


def _resolved_config(args) -> dict:
    cfg = {}
    for k, v in sorted(vars(args).items()):
        cfg[k] = str(v) if isinstance(v, Path) else v
    return cfg


def _build_system(args) -> SemSystem:
    if args.mesh_file is not None:
        mesh = load_mesh(args.mesh_file)
    else:
        mesh = box_mesh(args.ex, args.ey, args.ez)
    if args.affine is not None:
        a = args.affine
        mesh = deform_affine(mesh, np.reshape(a[:9], (3, 3)), a[9:] if len(a) == 12 else (0, 0, 0))
    if args.permute:
        mesh = permute_elements(mesh, np.random.default_rng(args.seed))
    if args.export_mesh is not None:
        save_mesh(mesh, args.export_mesh)
    return SemSystem.build(mesh, args.order, args.variant, args.precision)


def _rhs(system: SemSystem, args) -> np.ndarray:
    from .gather import mask_dirichlet

    if args.mms:
        return assemble_rhs(system, manufactured_forcing)
    if args.rhs_file is not None:
        field = np.load(args.rhs_file)
        if field.size != system.n:
            raise ConfigError("--rhs-file", f"field has {field.size} entries, mesh has {system.n}")
        return mask_dirichlet(field.reshape(system.field_shape), system.dofmap).astype(system.dtype)
    rng = np.random.default_rng(args.seed)
    unique = rng.standard_normal(system.dofmap.n_unique)
    field = unique[system.dofmap.global_id].reshape(system.field_shape)
    return mask_dirichlet(field, system.dofmap).astype(system.dtype)


def _run_solve(args):
    system = _build_system(args)
    b = _rhs(system, args)
    x, stats = cg_solve(system, b, rel_tol=args.tol, max_iter=args.max_iter)
    result = {
        "n": system.n,
        "n_unique": system.dofmap.n_unique,
        "n_gs": system.gsmap.traffic_count,
        "elements": system.mesh.num_elements,
        "order": system.basis.order,
        "iteration_words_formula": system.iteration_words(),
        "iteration_flops_formula": system.iteration_flops(),
        **stats.as_dict(timing=args.timing),
    }
    if args.mms:
        result["error"] = solution_errors(system, x)
    return system, stats, result


def cmd_solve(args) -> dict:
    return _run_solve(args)[2]


def cmd_reconcile(args) -> dict:
    machine = load_machine(args.machine)
    system, stats, solve = _run_solve(args)
    report = reconcile(stats, system, machine, include_timing=args.timing)
    report["converged"] = solve["converged"]
    report["table"] = [{
        "variant": system.variant,
        "streamed_measured": report["phases"]["streamed"]["measured"],
        "streamed_model": report["phases"]["streamed"]["model"],
        "gather_scatter_measured": report["phases"]["gather_scatter"]["measured"],
        "gather_scatter_model": report["phases"]["gather_scatter"]["model"],
        "flop_deviation_pct": report["flops"]["solver_deviation_pct"],
    }]
    return report


def cmd_analyze(args) -> dict:
    machine = load_machine(args.machine)
    prob = ProblemSpec(args.elements, args.order, args.iters)
    rep = cost_report(prob, machine, args.variant).as_dict()
    word_bytes = 8 if args.precision == 64 else 4
    q = rep["q_axcg"] if args.variant == "stored" else rep["q_remat"]
    return {
        "machine": machine.to_dict(),
        "variant": args.variant,
        "cost": rep,
        "q_variant": q,
        "q_variant_bytes": q * word_bytes,
        "work": work_counts(prob, args.variant),
    }


def cmd_model(args) -> dict:
    from .iomodel import MachineSpec

    prob = ProblemSpec(args.elements, args.order, args.iters)
    machine = MachineSpec("bounds", 1, 1, 1, 1, args.fast_mem)
    out = bound_report(prob, machine, args.m)
    out.update({
        "n_gs_fraction": n_gs_count(prob) / prob.n,
        "intensity_stored": intensity_stored(args.order),
        "intensity_remat": intensity_remat(args.order),
        "remat_work_ratios": remat_work_ratios(args.order),
        "presets": sorted(PRESETS),
    })
    return out


COMMANDS = {"solve": cmd_solve, "analyze": cmd_analyze, "model": cmd_model, "reconcile": cmd_reconcile}


def flatten(obj, prefix: str = "") -> list[tuple[str, object]]:
    if isinstance(obj, dict):
        rows = []
        for k, v in obj.items():
            rows += flatten(v, f"{prefix}.{k}" if prefix else str(k))
        return rows
    if isinstance(obj, (list, tuple)):
        rows = []
        for i, v in enumerate(obj):
            rows += flatten(v, f"{prefix}.{i}")
        return rows
    return [(prefix, obj)]


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, value in flatten(report):
        writer.writerow([key, json.dumps(value)])
    return buf.getvalue()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        result = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"semio {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, MeshError) as exc:
        print(f"semio {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"semio {args.command}: solver failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": _resolved_config(args),
        "result": result,
    }
    text = render(report, args.format)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text, encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
