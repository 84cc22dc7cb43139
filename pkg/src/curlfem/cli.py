"""Configuration-driven study runner.

Studies walk a ladder of refinement levels, assemble and solve the cavity
problem (or just interpolate / measure domain metrics), and emit a CSV, an
SVG log-log plot, and a JSON sidecar per study.  Configuration comes from
flags, optionally seeded from a JSON file (flags override file values).
"""
import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, asdict

from . import __version__
from .analysis import ConvergenceReport, emit_report, error_norms, field_norms, \
    pullback_error
from .assembly import apply_pec, assemble, build_dof_map
from .gmsh_io import read_gmsh
from .interpolation import FemFunction, global_interpolate
from .mesh import generate_ball_mesh, generate_cube_mesh
from .presets import PRESETS
from .solver import solve
from .transforms import hausdorff_estimate, radial_domain_map

STUDIES = ("ball-convergence", "cube-control", "interpolation-rates",
           "domain-metrics")


@dataclass
class StudyConfig:
    study: str = "ball-convergence"
    k: int = 1
    geo_order: int = 1
    levels: int = 4
    material: str = None            # preset name; defaults per study
    mesh_source: str = "builtin"    # builtin | gmsh
    gmsh_pattern: str = None        # e.g. meshes/ball_{level}.msh
    out: str = "out"
    q1: int = None
    q2: int = None
    q3: int = None
    solver: str = "direct"
    tol: float = 1e-10
    with_pullback: bool = False

    def validate(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}")
        if self.k not in (1, 2) or self.geo_order not in (1, 2):
            raise ValueError("k and geo-order must be 1 or 2")
        if self.levels < 2:
            raise ValueError("studies need at least 2 levels")
        if self.mesh_source == "gmsh" and not self.gmsh_pattern:
            raise ValueError("mesh-source gmsh requires --gmsh-pattern")
        if self.k > self.geo_order:
            print(f"warning: k={self.k} exceeds geometry order "
                  f"{self.geo_order}; expect degraded rates", file=sys.stderr)

    def preset(self):
        name = self.material
        if name is None:
            name = "cube-cavity" if self.study == "cube-control" else "ball-cavity"
        if name not in PRESETS:
            raise ValueError(f"unknown material preset {name!r} "
                             f"(available: {sorted(PRESETS)})")
        return PRESETS[name]()


def _mesh_for(config, level):
    if config.mesh_source == "gmsh":
        return read_gmsh(config.gmsh_pattern.format(level=level))
    if config.study == "cube-control":
        return generate_cube_mesh(level, order=1)
    return generate_ball_mesh(level, order=config.geo_order)


def _level_range(config):
    return list(range(config.levels))


def run_study(config):
    """Execute one study and return its convergence report (files emitted)."""
    config.validate()
    problem = config.preset()
    report = ConvergenceReport(study=config.study, k=config.k,
                               geo_order=config.geo_order,
                               material=problem.name)
    timings = {}
    for level in _level_range(config):
        t0 = time.perf_counter()
        mesh = _mesh_for(config, level)
        if config.study == "ball-convergence":
            row = _solve_level(config, problem, mesh)
        elif config.study == "cube-control":
            row = _solve_level(config, problem, mesh)
        elif config.study == "interpolation-rates":
            interpolant = global_interpolate(mesh, config.k, problem.exact)
            l2, hcurl = error_norms(mesh, interpolant, problem.exact)
            row = dict(ndof=interpolant.dof_map.num_dofs, l2_error=l2,
                       hcurl_error=hcurl)
        else:   # domain-metrics
            dmap = radial_domain_map(mesh)
            rep = dmap.discrepancies()
            gap = hausdorff_estimate(mesh)
            row = dict(ndof=build_dof_map(mesh, config.k).num_dofs,
                       l2_error=gap, hcurl_error=gap, d0=rep.d0, d1=rep.d1)
        report.add_row(level=level, h=mesh.h, **row)
        timings[f"level_{level}_seconds"] = round(time.perf_counter() - t0, 3)
    emit_report(report, config.out, metadata={"config": asdict(config),
                                              "timings": timings})
    return report


def _solve_level(config, problem, mesh):
    system = assemble(mesh, config.k, problem.materials,
                      q1_degree=config.q1, q2_degree=config.q2,
                      q3_degree=config.q3)
    reduced = apply_pec(system)
    x, _ = solve(reduced, tol=config.tol, method=config.solver)
    fem = FemFunction(mesh, config.k, reduced.embed(x), dof_map=system.dof_map)
    l2, hcurl = error_norms(mesh, fem, problem.exact)
    row = dict(ndof=reduced.matrix.shape[0], l2_error=l2, hcurl_error=hcurl)
    if config.with_pullback and problem.domain == "ball":
        dmap = radial_domain_map(mesh)
        rep = dmap.discrepancies()
        row.update(pullback_error=pullback_error(dmap, fem, problem.exact),
                   d0=rep.d0, d1=rep.d1)
    return row


def _apply_thread_cap():
    cap = os.environ.get("CURLFEM_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)
    try:   # BLAS pools already started by the numpy import need a runtime cap
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=int(cap))
    except ImportError:
        pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="curlfem",
        description="Convergence studies for the Maxwell cavity problem on "
                    "straight and curved tetrahedral meshes")
    parser.add_argument("--config", help="JSON file with StudyConfig fields")
    parser.add_argument("--study", choices=STUDIES)
    parser.add_argument("--k", type=int, choices=(1, 2))
    parser.add_argument("--geo-order", type=int, choices=(1, 2),
                        dest="geo_order")
    parser.add_argument("--levels", type=int)
    parser.add_argument("--material")
    parser.add_argument("--mesh-source", choices=("builtin", "gmsh"),
                        dest="mesh_source")
    parser.add_argument("--gmsh-pattern", dest="gmsh_pattern",
                        help="MSH path pattern with a {level} placeholder")
    parser.add_argument("--out")
    parser.add_argument("--q1", type=int)
    parser.add_argument("--q2", type=int)
    parser.add_argument("--q3", type=int)
    parser.add_argument("--solver", choices=("direct", "iterative"))
    parser.add_argument("--tol", type=float)
    parser.add_argument("--with-pullback", action="store_true", default=None,
                        dest="with_pullback")
    parser.add_argument("--version", action="version", version=__version__)
    return parser


def config_from_args(argv=None):
    args = build_parser().parse_args(argv)
    base = {}
    if args.config:
        with open(args.config, "r", encoding="ascii") as fh:
            base = json.load(fh)
        unknown = set(base) - set(StudyConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
    overrides = {key: value for key, value in vars(args).items()
                 if key not in ("config",) and value is not None}
    return StudyConfig(**{**base, **overrides})


def main(argv=None):
    _apply_thread_cap()
    try:
        config = config_from_args(argv)
        report = run_study(config)
    except Exception as exc:   # noqa: BLE001 - single CLI error surface
        print(f"error: {exc}", file=sys.stderr)
        return 1
    slopes = report.slopes()
    print(f"{report.study} k={report.k} geo={report.geo_order}: "
          + "  ".join(f"{k} EOC={v:.3f}" for k, v in slopes.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
