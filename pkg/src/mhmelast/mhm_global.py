"""Global skeleton problem of the two-level method: the saddle-point system
coupling the trace (traction) unknowns with the per-element rigid-body
modes, its solution, and the reconstruction of the element-wise fields.
"""

from dataclasses import dataclass

import numpy as np

from .fem_core import quad_rule

__all__ = [
    "SaddleSystem",
    "MHMSolution",
    "GlobalSolverError",
    "assemble_global_saddle",
    "solve_global",
    "postprocess_solution",
]


class GlobalSolverError(RuntimeError):
    pass


@dataclass
class SaddleSystem:
    """Dense symmetric saddle-point system

        [A  B] [lambda]   [c]
        [B' 0] [rho   ] = [d]

    with A the trace/trace pairing, B the trace/rigid-mode pairing, and the
    right-hand side built from the load solutions and the boundary data.
    """
    A: np.ndarray
    B: np.ndarray
    rhs_lambda: np.ndarray
    rhs_rm: np.ndarray
    n_lambda: int
    n_rm: int

    def full_matrix(self):
        n, m = self.n_lambda, self.n_rm
        M = np.zeros((n + m, n + m))
        M[:n, :n] = self.A
        M[:n, n:] = self.B
        M[n:, :n] = self.B.T
        return M

    def full_rhs(self):
        return np.concatenate([self.rhs_lambda, self.rhs_rm])


def _dirichlet_data_vector(skeleton, u_dirichlet, exactness):
    """Pairing of the trace basis with the boundary displacement data on
    Dirichlet-face segments."""
    out = np.zeros(skeleton.n_dofs)
    rule = quad_rule("segment", exactness)
    for face in skeleton.partition.faces:
        if face.tag != "dirichlet":
            continue
        for sid in skeleton.face_segments[face.id]:
            seg = skeleton.segments[sid]
            pts = seg.p0[None, :] + rule.points[:, None] * (seg.p1 - seg.p0)
            w = rule.weights * seg.length
            mu = skeleton.basis_values(seg, rule.points)     # (dps, nq, 2)
            ud = np.asarray(u_dirichlet(pts), dtype=float)
            out[skeleton.segment_dofs(sid)] += np.einsum(
                "q,iqc,qc->i", w, mu, ud)
    return out


def assemble_global_saddle(caches, skeleton, u_dirichlet=None):
    """Condense the per-element basis caches into the global system.

    The trace unknown is single-valued per skeleton segment; each element
    contributes through its orientation signs.  On Dirichlet faces the
    continuity equation is driven by the boundary displacement data.
    """
    n_lambda = skeleton.n_dofs
    n_rm = 3 * len(caches)
    A = np.zeros((n_lambda, n_lambda))
    B = np.zeros((n_lambda, n_rm))
    c = np.zeros(n_lambda)
    d = np.zeros(n_rm)
    for j, cache in enumerate(sorted(caches, key=lambda c: c.element_id)):
        idx = cache.trace_dofs
        s = cache.dof_signs
        A[np.ix_(idx, idx)] += s[:, None] * cache.pairing * s[None, :]
        B[idx, 3 * j:3 * j + 3] += s[:, None] * cache.rm_pairing
        c[idx] -= s * cache.load_pairing
        d[3 * j:3 * j + 3] = -cache.rm_load
    if u_dirichlet is not None:
        deg = max(cache.degree for cache in caches)
        c += _dirichlet_data_vector(skeleton, u_dirichlet,
                                    deg + skeleton.degree + 2)
    asym = np.abs(A - A.T).max()
    scale = max(np.abs(A).max(), 1.0)
    if asym > 1e-10 * scale:
        raise GlobalSolverError(f"pairing block not symmetric (|A-A'|={asym})")
    return SaddleSystem(0.5 * (A + A.T), B, c, d, n_lambda, n_rm)


def solve_global(system, rtol=1e-10):
    """Solve the dense saddle-point system and verify the residual."""
    M = system.full_matrix()
    b = system.full_rhs()
    try:
        x = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise GlobalSolverError(
            "singular global system; the local meshes may be too coarse for "
            "the trace space (see check_refinement_conditions)") from exc
    res = np.linalg.norm(M @ x - b)
    ref = np.linalg.norm(b) + np.linalg.norm(M, ord=np.inf) * np.linalg.norm(x)
    if not np.isfinite(res) or res > rtol * max(ref, 1e-300):
        raise GlobalSolverError(
            f"global solve residual {res:.3e} exceeds tolerance; the system "
            "is likely ill posed for this trace/local mesh combination")
    lam = x[:system.n_lambda]
    rho = x[system.n_lambda:].reshape(-1, 3)
    return lam, rho


@dataclass
class ElementFields:
    """Fine-space coefficient vectors of one coarse element."""
    cache: object
    u: np.ndarray          # interleaved vector coefficients (2*nsd,)
    p: np.ndarray          # scalar coefficients (nsd,); None without pressure


class MHMSolution:
    """Reconstructed two-level solution: trace coefficients, rigid-body
    coefficients per element, and the fine displacement/pressure fields."""

    def __init__(self, skeleton, lam, rho, fields):
        self.skeleton = skeleton
        self.lam = lam
        self.rho = rho
        self.fields = fields          # element_id -> ElementFields

    @property
    def has_pressure(self):
        return all(f.p is not None for f in self.fields.values())


def postprocess_solution(caches, skeleton, lam, rho):
    """Recombine the condensed basis: per element,
    u = sum_i sign_i lambda_i T(mu_i) + That(f) + rigid part."""
    fields = {}
    for j, cache in enumerate(sorted(caches, key=lambda c: c.element_id)):
        coef = np.append(cache.dof_signs * lam[cache.trace_dofs], 1.0)
        u = cache.Uu @ coef
        rm_nodal = cache.rigid_modes.nodal_coefficients(cache.dofh.dof_coords)
        u = u + rm_nodal @ rho[j]
        p = cache.Up @ coef if cache.Up is not None else None
        fields[cache.element_id] = ElementFields(cache, u, p)
    return MHMSolution(skeleton, lam, rho, fields)
