"""Reference-element machinery: Lagrange P_k shape functions with first and
second derivatives, quadrature rules on triangles and segments, and the
numerical estimation of the inverse-inequality constant used to bound the
stabilization parameter.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh, null_space

__all__ = [
    "ReferenceElement",
    "QuadratureRule",
    "InverseConstant",
    "reference_element",
    "quad_rule",
    "estimate_inverse_constant",
    "inverse_constant",
]


# ---------------------------------------------------------------------------
# Lagrange basis on the reference triangle {(x, y): x, y >= 0, x + y <= 1}
# ---------------------------------------------------------------------------

def _lattice_nodes(k):
    """Lagrange node lattice, ordered: 3 vertices, then (k-1) nodes per edge
    (edge 0: v0->v1, edge 1: v1->v2, edge 2: v2->v0), then interior nodes.
    """
    verts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    nodes = list(verts)
    for t in range(1, k):
        nodes.append((t / k, 0.0))                 # edge v0 -> v1
    for t in range(1, k):
        nodes.append(((k - t) / k, t / k))         # edge v1 -> v2
    for t in range(1, k):
        nodes.append((0.0, (k - t) / k))           # edge v2 -> v0
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append((i / k, j / k))
    return np.array(nodes)


class ReferenceElement:
    """Scalar Lagrange P_k element on the reference triangle.

    Shape functions are represented in the monomial basis through the inverse
    of the node Vandermonde matrix; adequate conditioning for k <= 6, well
    beyond the degrees used here.
    """

    def __init__(self, k):
        if k < 1:
            raise ValueError("polynomial degree must be >= 1")
        self.degree = k
        self.nodes = _lattice_nodes(k)
        self.exponents = np.array(
            [(a, b) for a in range(k + 1) for b in range(k + 1 - a)]
        )
        V = self._monomials(self.nodes)
        self.coeffs = np.linalg.inv(V)  # column i: monomial coeffs of N_i
        self.n_basis = len(self.nodes)
        # counts used by the dof handler
        self.n_edge_nodes = k - 1
        self.n_interior_nodes = self.n_basis - 3 - 3 * (k - 1)

    def _monomials(self, pts):
        pts = np.asarray(pts, dtype=float)
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        return pts[:, 0:1] ** a * pts[:, 1:2] ** b

    def tabulate(self, pts):
        """Evaluate (values, gradients, hessians) at reference points.

        Returns arrays of shape (npts, nb), (npts, nb, 2), (npts, nb, 2, 2).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.exponents[:, 0].astype(float)
        b = self.exponents[:, 1].astype(float)
        x = pts[:, 0:1]
        y = pts[:, 1:2]
        with np.errstate(divide="ignore", invalid="ignore"):
            xa = x ** a
            yb = y ** b
            xam1 = np.where(a >= 1, x ** np.maximum(a - 1, 0), 0.0)
            ybm1 = np.where(b >= 1, y ** np.maximum(b - 1, 0), 0.0)
            xam2 = np.where(a >= 2, x ** np.maximum(a - 2, 0), 0.0)
            ybm2 = np.where(b >= 2, y ** np.maximum(b - 2, 0), 0.0)
        mono = xa * yb
        dx = a * xam1 * yb
        dy = b * xa * ybm1
        dxx = a * (a - 1) * xam2 * yb
        dyy = b * (b - 1) * xa * ybm2
        dxy = a * b * xam1 * ybm1
        C = self.coeffs
        vals = mono @ C
        grads = np.stack([dx @ C, dy @ C], axis=-1)
        hess = np.empty((pts.shape[0], self.n_basis, 2, 2))
        hess[:, :, 0, 0] = dxx @ C
        hess[:, :, 1, 1] = dyy @ C
        hess[:, :, 0, 1] = dxy @ C
        hess[:, :, 1, 0] = hess[:, :, 0, 1]
        return vals, grads, hess

    def shape_eval(self, point):
        """Values, gradients and Hessians of all shape functions at one
        point of the closed reference triangle."""
        p = np.asarray(point, dtype=float)
        if p[0] < -1e-12 or p[1] < -1e-12 or p[0] + p[1] > 1 + 1e-12:
            raise ValueError(f"point {point} outside reference triangle")
        vals, grads, hess = self.tabulate(p[None, :])
        return vals[0], grads[0], hess[0]


@lru_cache(maxsize=None)
def reference_element(k):
    return ReferenceElement(k)


def shape_eval(element, point):
    return element.shape_eval(point)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_MAX_EXACTNESS = 60


@dataclass(frozen=True)
class QuadratureRule:
    kind: str              # "triangle" | "segment"
    points: np.ndarray     # (nq, 2) reference coords or (nq,) on [0, 1]
    weights: np.ndarray
    exactness: int


@lru_cache(maxsize=None)
def quad_rule(kind, exactness):
    """Quadrature exact to the requested total degree.

    Segments use Gauss-Legendre on [0, 1]; triangles use a collapsed
    (Duffy-type) tensor Gauss rule on the reference triangle.
    """
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    if exactness > _MAX_EXACTNESS:
        raise ValueError(f"exactness {exactness} above implemented table")
    if kind == "segment":
        n = max(1, (exactness + 2) // 2)
        x, w = np.polynomial.legendre.leggauss(n)
        return QuadratureRule("segment", (x + 1) / 2, w / 2, exactness)
    if kind == "triangle":
        # x = xi * (1 - eta), y = eta; Jacobian factor (1 - eta).
        p = exactness
        mx = max(1, (p + 2) // 2)
        my = max(1, (p + 3) // 2)
        gx, wx = np.polynomial.legendre.leggauss(mx)
        gy, wy = np.polynomial.legendre.leggauss(my)
        gx = (gx + 1) / 2
        wx = wx / 2
        gy = (gy + 1) / 2
        wy = wy / 2
        XI, ETA = np.meshgrid(gx, gy, indexing="ij")
        WX, WY = np.meshgrid(wx, wy, indexing="ij")
        pts = np.column_stack([(XI * (1 - ETA)).ravel(), ETA.ravel()])
        wts = (WX * WY * (1 - ETA)).ravel()
        return QuadratureRule("triangle", pts, wts, exactness)
    raise ValueError(f"unknown quadrature domain {kind!r}")


# ---------------------------------------------------------------------------
# Inverse inequality constant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InverseConstant:
    degree: int
    value: float
    safe_value: float


def estimate_inverse_constant(k, sample_mesh, safety=0.9):
    """Numerically estimate the largest constant C such that

        C * sum_tau h_tau^2 (h_K^-2 ||eps(v)||_tau^2 + ||div eps(v)||_tau^2)
            <= ||eps(v)||_K^2

    for all continuous P_k vector fields v on the sample mesh.  Computed as
    the smallest generalized Rayleigh quotient of the two quadratic forms on
    the complement of the rigid-body modes (where both forms vanish).
    """
    from ._assembly import DofHandler, Geometry

    ref = reference_element(k)
    dofh = DofHandler(sample_mesh, ref)
    geo = Geometry(sample_mesh)
    rule = quad_rule("triangle", max(0, 2 * k))
    vals, grads, hess = ref.tabulate(rule.points)
    g = np.einsum("tji,qbi->tqbj", geo.jinv_t, grads)
    h = np.einsum("tji,qbim,tml->tqbjl", geo.jinv_t, hess, geo.jinv)
    lap = h[..., 0, 0] + h[..., 1, 1]
    w = rule.weights[None, :] * geo.detj[:, None]

    nt = sample_mesh.n_triangles
    nb = ref.n_basis
    nd = 2 * dofh.n_dofs
    h_tau = geo.diameters
    h_K = sample_mesh.h_max

    # strain inner product per triangle: eps(N_b e_c) : eps(N_b' e_c')
    gg = np.einsum("tq,tqbi,tqci->tbc", w, g, g)
    gcross = np.einsum("tq,tqbi,tqcj->tbicj", w, g, g)
    E = np.zeros((nt, 2 * nb, 2 * nb))
    for c in range(2):
        for d in range(2):
            blk = 0.5 * gcross[:, :, d, :, c]
            if c == d:
                blk = blk + 0.5 * gg
            E[:, c::2, d::2] = blk

    # div eps(N_b e_c) has components 0.5 * (H_b[i, c] + lap_b * delta_ic)
    D = np.zeros((nt, rule.points.shape[0], 2 * nb, 2))
    for c in range(2):
        D[:, :, c::2, :] = 0.5 * h[..., c]
        D[:, :, c::2, c] += 0.5 * lap
    DD = np.einsum("tq,tqai,tqbi->tab", w, D, D)

    M = np.zeros((nd, nd))
    Q = np.zeros((nd, nd))
    for t in range(nt):
        idx = np.empty(2 * nb, dtype=int)
        idx[0::2] = 2 * dofh.loc2glob[t]
        idx[1::2] = 2 * dofh.loc2glob[t] + 1
        M[np.ix_(idx, idx)] += E[t]
        Q[np.ix_(idx, idx)] += h_tau[t] ** 2 * (E[t] / h_K**2 + DD[t])

    # rigid modes in nodal coordinates
    xy = dofh.dof_coords
    xc, yc = xy.mean(axis=0)
    R = np.zeros((nd, 3))
    R[0::2, 0] = 1.0
    R[1::2, 1] = 1.0
    R[0::2, 2] = -(xy[:, 1] - yc)
    R[1::2, 2] = xy[:, 0] - xc
    Z = null_space(R.T)
    Mz = Z.T @ M @ Z
    Qz = Z.T @ Q @ Z
    Qz = 0.5 * (Qz + Qz.T)
    Mz = 0.5 * (Mz + Mz.T)
    try:
        vals = eigh(Mz, Qz, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular mass form (degenerate mesh)") from exc
    c_i = float(vals[0])
    if c_i <= 0:
        raise RuntimeError("non-positive inverse-constant estimate")
    return InverseConstant(k, c_i, safety * c_i)


@lru_cache(maxsize=None)
def inverse_constant(k):
    """Default inverse constant per degree, estimated on a single reference
    triangle.  Conservative for red-refined meshes, whose sub-triangles are
    similar to the parent and carry h_tau <= h_K."""
    from .mesh import TriMesh

    mesh = TriMesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
    )
    return estimate_inverse_constant(k, mesh)
