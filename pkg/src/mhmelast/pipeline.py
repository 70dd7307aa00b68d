"""End-to-end driver for the two-level solver: configuration, mesh setup,
parallel local solves, global solve, and reconstruction.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .local_solver import MaterialField, build_local_cache
from .mesh import (build_matching_local_mesh, build_structured_triangulation,
                   check_refinement_conditions, refine_skeleton)
from .mhm_global import assemble_global_saddle, postprocess_solution, solve_global

__all__ = ["MHMConfig", "RunData", "default_depth", "solve_mhm"]

THREADS_ENV = "MHMELAST_THREADS"


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def default_depth(k, level):
    """Local refinement depth giving fine edges of length 2^(k-3) times the
    skeleton segment length (the minimum compatible with well-posedness for
    the degrees used here), and never coarser than the segments."""
    return max(0, level + 3 - k)


@dataclass
class MHMConfig:
    """Parameters of one two-level solve on the unit square."""
    n: int = 4                   # structured coarse grid parameter (2n^2 cells)
    level: int = 0               # skeleton refinement: 2^level segments/face
    k: int = 1                   # local polynomial degree
    ell: int = 1                 # trace polynomial degree
    nu: float = 0.3
    G: float = 1.0
    theta: float = 0.5           # stabilization safety fraction
    kind: str = "gals"           # local solver: "gals" | "galerkin"
    depth: int = None            # local refinement depth; None = automatic
    threads: int = None
    override_wellposedness: bool = False
    boundary_tag: object = None

    def __post_init__(self):
        if self.k < 1 or self.ell < 1:
            raise ValueError("polynomial degrees must be >= 1")
        if not 0 < self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in (0, 1/2)")
        if self.kind not in ("gals", "galerkin"):
            raise ValueError(f"unknown solver kind {self.kind!r}")


@dataclass
class RunData:
    """Everything produced by one run besides the solution itself."""
    partition: object
    skeleton: object
    local_meshes: list
    caches: list
    system: object
    refinement: object
    config: MHMConfig
    extras: dict = field(default_factory=dict)


def solve_mhm(config, problem, g=None):
    """Run the full two-level pipeline for a benchmark problem providing
    `f` (load) and `u` (Dirichlet data) callables."""
    part = build_structured_triangulation(config.n,
                                         boundary_tag=config.boundary_tag)
    skeleton = refine_skeleton(part, config.level, config.ell)
    depth = config.depth if config.depth is not None else \
        default_depth(config.k, config.level)
    local_meshes = [build_matching_local_mesh(part, eid, skeleton, depth)
                    for eid in range(part.n_elements)]

    report = check_refinement_conditions(config.k, config.ell, local_meshes,
                                         skeleton)
    if not report.ok and not config.override_wellposedness:
        bad = {e: r for e, (s, r) in report.element_status.items() if not s}
        raise RuntimeError(
            "local meshes fail the refinement conditions for well-posedness "
            f"(set override_wellposedness to force): {bad}")

    material = MaterialField(config.G, config.nu)

    def one_element(lm):
        return build_local_cache(part, lm, skeleton, material, config.k,
                                 kind=config.kind, theta=config.theta,
                                 f=problem.f, g=g)

    threads = config.threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            caches = list(pool.map(one_element, local_meshes))
    else:
        caches = [one_element(lm) for lm in local_meshes]

    system = assemble_global_saddle(caches, skeleton, u_dirichlet=problem.u)
    lam, rho = solve_global(system)
    solution = postprocess_solution(caches, skeleton, lam, rho)
    data = RunData(part, skeleton, local_meshes, caches, system, report, config)
    return solution, data
