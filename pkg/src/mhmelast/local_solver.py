"""Local Neumann solvers producing the multiscale basis on each coarse
element: the stabilized displacement-pressure operators, the plain Galerkin
variant, the rigid-body projection, and the stabilization parameter.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _assembly as asm
from .fem_core import inverse_constant, quad_rule, reference_element

__all__ = [
    "MaterialField",
    "RigidModes",
    "LocalBasisCache",
    "compute_alpha",
    "project_rm",
    "assemble_local_gals",
    "assemble_local_galerkin",
    "solve_local_basis",
    "build_local_cache",
]


class LocalSolverError(RuntimeError):
    pass


class MaterialField:
    """Isotropic material data: shear modulus G and Poisson ratio nu, given
    as constants or callables of point arrays (..., 2).

    G is treated as piecewise constant on the fine mesh (its gradient does
    not enter the least-squares terms), so the broken W^{1,inf} norm reduces
    to the max of |G| over quadrature points.
    """

    def __init__(self, G, nu):
        self._G = G
        self._nu = nu

    def _eval(self, f, x):
        x = np.asarray(x, dtype=float)
        if callable(f):
            return np.asarray(f(x), dtype=float)
        return np.full(x.shape[:-1], float(f))

    def G_at(self, x):
        g = self._eval(self._G, x)
        if np.any(g <= 0):
            raise ValueError("shear modulus must be positive")
        return g

    def nu_at(self, x):
        nu = self._eval(self._nu, x)
        if np.any(nu <= 0) or np.any(nu >= 0.5):
            raise ValueError("Poisson ratio must lie in (0, 1/2)")
        return nu

    def eps_at(self, x):
        """Compressibility coefficient (1 - 2 nu) / (2 G nu)."""
        g = self.G_at(x)
        nu = self.nu_at(x)
        return (1 - 2 * nu) / (2 * g * nu)

    def stats(self, points):
        """(ess-inf of G, W^{1,inf}-style norm of G) sampled at points."""
        g = self.G_at(points)
        return float(g.min()), float(np.abs(g).max())


def compute_alpha(material, sample_points, c_inverse, theta=0.5):
    """Stabilization parameter strictly inside the admissible interval:
    alpha = theta * G_0 * C_I / (2 ||G||^2), with 0 < theta < 1."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    g0, gnorm = material.stats(sample_points)
    if g0 <= 0:
        raise ValueError("non-positive shear modulus")
    return theta * g0 * c_inverse.safe_value / (2 * gnorm**2)


def admissible_alpha_bound(material, sample_points, c_inverse):
    g0, gnorm = material.stats(sample_points)
    return g0 * c_inverse.value / (2 * gnorm**2)


class RigidModes:
    """The three rigid-body displacement fields on an element: two
    translations and the infinitesimal rotation about the centroid."""

    def __init__(self, centroid):
        self.centroid = np.asarray(centroid, dtype=float)

    def evaluate(self, x):
        """Values of the 3 modes at points (..., 2): shape (3, ..., 2)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((3,) + x.shape)
        out[0, ..., 0] = 1.0
        out[1, ..., 1] = 1.0
        out[2, ..., 0] = -(x[..., 1] - self.centroid[1])
        out[2, ..., 1] = x[..., 0] - self.centroid[0]
        return out

    def nodal_coefficients(self, dof_coords):
        """Vector-dof coefficient columns of the modes (2*nsd, 3); exact
        since the modes are affine."""
        vals = self.evaluate(dof_coords)      # (3, nsd, 2)
        n = dof_coords.shape[0]
        out = np.empty((2 * n, 3))
        for m in range(3):
            out[0::2, m] = vals[m, :, 0]
            out[1::2, m] = vals[m, :, 1]
        return out


@dataclass
class LocalBasisCache:
    """Condensed multiscale basis of one coarse element.

    Columns of `Uu`/`Up` hold the displacement/pressure solutions for every
    trace basis function supported on the element boundary, with the load
    solution in the last column.  The pairing blocks close the global
    saddle-point problem.
    """
    element_id: int
    kind: str                       # "gals" | "galerkin"
    local_mesh: object
    dofh: object
    seg_ids: list                   # skeleton segments on the boundary, ordered
    dof_signs: np.ndarray           # orientation sign n_F . n^K per trace dof
    trace_dofs: np.ndarray          # global trace dof indices, cache order
    Uu: np.ndarray                  # (2*nsd, ntr + 1)
    Up: np.ndarray                  # (nsd, ntr + 1); None for "galerkin"
    pairing: np.ndarray             # (ntr, ntr), <mu_i, T_h(mu_j)>
    rm_pairing: np.ndarray          # (ntr, 3), <mu_i, v_rm>
    load_pairing: np.ndarray        # (ntr,), <mu_i, That(f)>
    rm_load: np.ndarray             # (3,), int f . v_rm + Neumann part
    rigid_modes: RigidModes
    alpha: float
    degree: int
    material: MaterialField = None
    multipliers: np.ndarray = None

    @property
    def n_trace(self):
        return len(self.trace_dofs)


@dataclass
class _LocalSystem:
    matrix: sp.csc_matrix
    rhs: np.ndarray                # (ndof_total, ntr + 1)
    meta: dict = field(default_factory=dict)


def _element_boundary_setup(partition, local_mesh, skeleton):
    """Ordered skeleton segments on the element boundary with signs."""
    K = local_mesh.element_id
    fids = partition.elem_face_ids[K]
    signs = partition.elem_face_signs[K]
    seg_ids, seg_signs = [], []
    for fid, sg in zip(fids, signs):
        for sid in skeleton.face_segments[fid]:
            seg_ids.append(sid)
            seg_signs.append(sg)
    return seg_ids, np.array(seg_signs, dtype=int)


def _edge_quad_data(local_mesh, geo, ref, exactness):
    """Per fine boundary edge: quad points, ds-weights and test shape
    values on the adjacent triangle."""
    rule = quad_rule("segment", exactness)
    out = []
    for be in local_mesh.boundary_edges:
        x0 = local_mesh.mesh.vertices[be.v0]
        x1 = local_mesh.mesh.vertices[be.v1]
        length = np.linalg.norm(x1 - x0)
        pts = x0[None, :] + rule.points[:, None] * (x1 - x0)[None, :]
        w = rule.weights * length
        refc = geo.reference_coords(be.triangle, pts)
        vals, _, _ = ref.tabulate(refc)
        out.append((be, pts, w, vals))
    return out


def _trace_values(skeleton, seg, pts):
    """Trace basis values at physical points lying on a segment."""
    part = skeleton.partition
    face = part.faces[seg.face_id]
    a = part.vertices[face.v0]
    b = part.vertices[face.v1]
    t = b - a
    s_face = (pts - a) @ t / np.dot(t, t)
    s_loc = (s_face - seg.s0) / (seg.s1 - seg.s0)
    return skeleton.basis_values(seg, s_loc)     # (dps, nq, 2)


def _vec_l2g(dofh, triangle, nb):
    out = np.empty(2 * nb, dtype=int)
    out[0::2] = 2 * dofh.loc2glob[triangle]
    out[1::2] = 2 * dofh.loc2glob[triangle] + 1
    return out


class _BoundaryBlocks:
    """Boundary pairings of one element: trace-vs-displacement matrix R,
    trace-vs-rigid-mode block, and the Neumann load contribution."""

    def __init__(self, partition, local_mesh, skeleton, dofh, geo, ref, rm, g):
        self.seg_ids, seg_signs = _element_boundary_setup(
            partition, local_mesh, skeleton)
        dps = skeleton.dofs_per_segment
        self.ntr = len(self.seg_ids) * dps
        self.dof_signs = (np.repeat(seg_signs, dps)
                          if self.seg_ids else np.empty(0, dtype=int))
        seg_pos = {sid: i for i, sid in enumerate(self.seg_ids)}
        nu = 2 * dofh.n_dofs
        nb = ref.n_basis
        self.R = np.zeros((self.ntr, nu))
        self.Grm = np.zeros((self.ntr, 3))
        self.neumann_load = np.zeros(nu)
        self.neumann_rm = np.zeros(3)
        edges = _edge_quad_data(local_mesh, geo, ref,
                                ref.degree + skeleton.degree + 1)
        for be, pts, w, vals in edges:
            vl2g = _vec_l2g(dofh, be.triangle, nb)
            if be.segment >= 0:
                seg = skeleton.segments[be.segment]
                mu = _trace_values(skeleton, seg, pts)
                base = seg_pos[be.segment] * dps
                contrib = np.einsum("q,iqc,qb->ibc", w, mu, vals)
                block = np.empty((dps, 2 * nb))
                block[:, 0::2] = contrib[..., 0]
                block[:, 1::2] = contrib[..., 1]
                for i in range(dps):
                    np.add.at(self.R[base + i], vl2g, block[i])
                rmv = rm.evaluate(pts)
                self.Grm[base:base + dps] += np.einsum(
                    "q,iqc,mqc->im", w, mu, rmv)
            if be.on_neumann and g is not None:
                gq = np.asarray(g(pts), dtype=float)
                contrib = np.einsum("q,qc,qb->bc", w, gq, vals)
                vec = np.empty(2 * nb)
                vec[0::2] = contrib[:, 0]
                vec[1::2] = contrib[:, 1]
                np.add.at(self.neumann_load, vl2g, vec)
                self.neumann_rm += np.einsum(
                    "q,qc,mqc->m", w, gq, rm.evaluate(pts))


def _constraint_rows(dofh, tab, rm):
    """Rows enforcing L2-orthogonality to the rigid modes: (3, 2*nsd)."""
    rmq = rm.evaluate(tab.points)
    Cel = np.einsum("tq,qb,mtqc->tmbc", tab.wdet, tab.vals, rmq)
    nu = 2 * dofh.n_dofs
    C = np.zeros((3, nu))
    for m in range(3):
        for c in range(2):
            np.add.at(C[m], 2 * dofh.loc2glob.ravel() + c,
                      Cel[:, m, :, c].ravel())
    return C


def _rigid_load(tab, rm, f):
    fq = np.asarray(f(tab.points), dtype=float)
    return np.einsum("tq,tqc,mtqc->m", tab.wdet, fq, rm.evaluate(tab.points))


def assemble_local_gals(partition, local_mesh, skeleton, material, alpha, k,
                        c_inverse=None, f=None, g=None):
    """Assemble the stabilized displacement-pressure local system of one
    coarse element.

    Unknowns: [u (interleaved vector P_k); p (P_k); 3 rigid multipliers].
    Right-hand sides: one per boundary trace basis function, plus the load.
    """
    ref = reference_element(k)
    mesh = local_mesh.mesh
    dofh = asm.DofHandler(mesh, ref)
    tab = asm.Tabulation(mesh, ref, 2 * k + 2)
    Gq = material.G_at(tab.points)
    epsq = material.eps_at(tab.points)
    if c_inverse is not None:
        bound = admissible_alpha_bound(material, tab.points, c_inverse)
        if not 0 < alpha < bound:
            raise LocalSolverError(
                f"alpha={alpha} outside the admissible interval (0, {bound})")

    nsd = dofh.n_dofs
    nu = 2 * nsd
    ntot = nu + nsd + 3

    A_el, Dall = asm.gals_element_matrices(tab, Gq, epsq, alpha)
    l2g = np.concatenate([dofh.vector_loc2glob(), nu + dofh.loc2glob], axis=1)
    A = asm.scatter(A_el, l2g, (ntot, ntot)).tolil()

    e = partition.elements[local_mesh.element_id]
    rm = RigidModes(partition.vertices[list(e)].mean(axis=0))
    C = _constraint_rows(dofh, tab, rm)
    A[nu + nsd:, :nu] = C
    A[:nu, nu + nsd:] = C.T
    A = A.tocsc()

    bb = _BoundaryBlocks(partition, local_mesh, skeleton, dofh, tab.geo,
                         ref, rm, g)
    ntr = bb.ntr
    rhs = np.zeros((ntot, ntr + 1))
    rhs[:nu, :ntr] = bb.R.T
    rhs[:nu, ntr] += bb.neumann_load
    d_rm = bb.neumann_rm.copy()
    if f is not None:
        fq = np.asarray(f(tab.points), dtype=float)
        F_el = asm.load_vector(tab, fq, Dall=Dall, alpha=alpha)
        rhs[:nu + nsd, ntr] += asm.scatter_vector(F_el, l2g, nu + nsd)
        d_rm += _rigid_load(tab, rm, f)

    meta = dict(dofh=dofh, tab=tab, bb=bb, d_rm=d_rm, rm=rm, nu=nu,
                nsd=nsd, alpha=alpha, kind="gals")
    return _LocalSystem(A, rhs, meta)


def assemble_local_galerkin(partition, local_mesh, skeleton, material, k,
                            f=None, g=None):
    """Displacement-only local system (no pressure unknown, no
    stabilization) used by the MHM-Ga variant."""
    ref = reference_element(k)
    mesh = local_mesh.mesh
    dofh = asm.DofHandler(mesh, ref)
    tab = asm.Tabulation(mesh, ref, 2 * k + 2)
    Gq = material.G_at(tab.points)
    epsq = material.eps_at(tab.points)

    nsd = dofh.n_dofs
    nu = 2 * nsd
    ntot = nu + 3
    A_el = asm.galerkin_element_matrices(tab, Gq, epsq)
    l2g = dofh.vector_loc2glob()
    A = asm.scatter(A_el, l2g, (ntot, ntot)).tolil()

    e = partition.elements[local_mesh.element_id]
    rm = RigidModes(partition.vertices[list(e)].mean(axis=0))
    C = _constraint_rows(dofh, tab, rm)
    A[nu:, :nu] = C
    A[:nu, nu:] = C.T
    A = A.tocsc()

    bb = _BoundaryBlocks(partition, local_mesh, skeleton, dofh, tab.geo,
                         ref, rm, g)
    ntr = bb.ntr
    rhs = np.zeros((ntot, ntr + 1))
    rhs[:nu, :ntr] = bb.R.T
    rhs[:nu, ntr] += bb.neumann_load
    d_rm = bb.neumann_rm.copy()
    if f is not None:
        fq = np.asarray(f(tab.points), dtype=float)
        rhs[:nu, ntr] += asm.scatter_vector(asm.load_vector(tab, fq), l2g, nu)
        d_rm += _rigid_load(tab, rm, f)

    meta = dict(dofh=dofh, tab=tab, bb=bb, d_rm=d_rm, rm=rm, nu=nu,
                nsd=nsd, alpha=0.0, kind="galerkin")
    return _LocalSystem(A, rhs, meta)


def solve_local_basis(local_mesh, skeleton, system, k):
    """Factorize the local system once and solve for every right-hand side,
    producing the element's condensed basis cache."""
    m = system.meta
    try:
        lu = splu(system.matrix)
    except RuntimeError as exc:
        raise LocalSolverError(
            "singular local system; run check_refinement_conditions") from exc
    X = lu.solve(system.rhs)
    if not np.all(np.isfinite(X)):
        raise LocalSolverError(
            "local solve produced non-finite values; the local mesh may be "
            "too coarse for the trace space")
    nu, nsd = m["nu"], m["nsd"]
    bb = m["bb"]
    ntr = bb.ntr
    Uu = X[:nu]
    if m["kind"] == "gals":
        Up = X[nu:nu + nsd]
        mult = X[nu + nsd:]
    else:
        Up = None
        mult = X[nu:]
    pairing = bb.R @ Uu[:, :ntr]
    load_pairing = bb.R @ Uu[:, ntr]
    trace_dofs = (np.concatenate([skeleton.segment_dofs(s) for s in bb.seg_ids])
                  if bb.seg_ids else np.empty(0, dtype=int))
    return LocalBasisCache(
        element_id=local_mesh.element_id,
        kind=m["kind"],
        local_mesh=local_mesh,
        dofh=m["dofh"],
        seg_ids=bb.seg_ids,
        dof_signs=bb.dof_signs,
        trace_dofs=trace_dofs,
        Uu=Uu,
        Up=Up,
        pairing=pairing,
        rm_pairing=bb.Grm,
        load_pairing=load_pairing,
        rm_load=m["d_rm"],
        rigid_modes=m["rm"],
        alpha=m["alpha"],
        degree=k,
        multipliers=mult,
    )


def build_local_cache(partition, local_mesh, skeleton, material, k,
                      kind="gals", theta=0.5, f=None, g=None):
    """Convenience pipeline: alpha, assembly and solve for one element."""
    if kind == "gals":
        ref = reference_element(k)
        tab = asm.Tabulation(local_mesh.mesh, ref, 2 * k + 2)
        ci = inverse_constant(k)
        alpha = compute_alpha(material, tab.points, ci, theta=theta)
        system = assemble_local_gals(partition, local_mesh, skeleton, material,
                                     alpha, k, c_inverse=ci, f=f, g=g)
    elif kind == "galerkin":
        system = assemble_local_galerkin(partition, local_mesh, skeleton,
                                         material, k, f=f, g=g)
    else:
        raise ValueError(f"unknown local solver kind {kind!r}")
    cache = solve_local_basis(local_mesh, skeleton, system, k)
    cache.material = material
    return cache


def project_rm(rigid_modes, dofh, tab, coeffs):
    """L2 projection of a discrete vector field onto the rigid modes.

    Returns (rm coefficients, residual coefficient vector); the residual is
    L2-orthogonal to the modes.
    """
    C = _constraint_rows(dofh, tab, rigid_modes)
    Rn = rigid_modes.nodal_coefficients(dofh.dof_coords)
    gram = C @ Rn
    try:
        rho = np.linalg.solve(gram, C @ coeffs)
    except np.linalg.LinAlgError as exc:
        raise LocalSolverError("singular rigid-mode Gram matrix") from exc
    return rho, coeffs - Rn @ rho
