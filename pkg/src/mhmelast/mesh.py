"""Coarse partitions of the domain, skeleton (trace) meshes and matching
local submeshes.

The coarse partition is a triangulation whose edges form the skeleton; each
skeleton face can be split into 2^r equal segments carrying the trace
(traction) degrees of freedom, and each coarse triangle carries a uniformly
red-refined local mesh that matches the skeleton segments.
"""

import io
from dataclasses import dataclass, field

import numpy as np

GEOM_TOL = 1e-12


def _cross2(a, b):
    """z-component of the cross product of 2D vectors."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

__all__ = [
    "TriMesh",
    "GlobalPartition",
    "SkeletonMesh",
    "LocalMesh",
    "RefinementReport",
    "build_structured_triangulation",
    "refine_skeleton",
    "build_matching_local_mesh",
    "check_refinement_conditions",
    "unit_square_mesh",
    "write_partition",
    "read_partition",
]


class TriMesh:
    """A plain simplicial mesh: vertex coordinates and triangle connectivity
    (counterclockwise)."""

    def __init__(self, vertices, triangles):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        v = self.vertices[self.triangles]
        cross = _cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if np.any(cross <= 0):
            raise ValueError("mesh contains non-CCW or degenerate triangles")
        self.areas = 0.5 * cross
        e0 = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        e1 = np.linalg.norm(v[:, 2] - v[:, 1], axis=1)
        e2 = np.linalg.norm(v[:, 0] - v[:, 2], axis=1)
        self.diameters = np.max([e0, e1, e2], axis=0)
        # inradius rho = 2 * area / perimeter
        self.shape_regularity = self.diameters * (e0 + e1 + e2) / (2 * self.areas)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def h_max(self):
        return float(self.diameters.max())

    def edges(self):
        """Dict mapping sorted vertex pair -> list of adjacent triangle ids."""
        adj = {}
        for t, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                adj.setdefault(key, []).append(t)
        return adj


@dataclass
class Face:
    """A coarse skeleton face: an oriented edge of the global partition."""
    id: int
    v0: int
    v1: int
    normal: np.ndarray         # fixed global unit normal n_F
    elements: tuple            # (K,) boundary or (K_low, K_high) interior
    tag: str                   # "interior" | "dirichlet" | "neumann"

    @property
    def is_boundary(self):
        return len(self.elements) == 1


class GlobalPartition:
    """The coarse partition: CCW triangles, oriented skeleton faces with
    adjacency and boundary tags.

    The face normal convention is: for interior faces, n_F points from the
    lower-indexed adjacent element to the higher-indexed one; for boundary
    faces, n_F is the outward normal.
    """

    def __init__(self, vertices, elements, boundary_tag=None, domain_area=1.0):
        self.vertices = np.asarray(vertices, dtype=float)
        self.elements = [tuple(int(v) for v in e) for e in elements]
        for e in self.elements:
            if len(e) != 3:
                raise ValueError("only triangular coarse elements are supported")
        areas = []
        for e in self.elements:
            p = self.vertices[list(e)]
            a = 0.5 * _cross2(p[1] - p[0], p[2] - p[0])
            if a <= 0:
                raise ValueError("coarse element is degenerate or not CCW")
            areas.append(a)
        self.element_areas = np.array(areas)
        if abs(self.element_areas.sum() - domain_area) > 1e-12 * max(domain_area, 1.0):
            raise ValueError("element areas do not sum to the domain area")

        diam = []
        for e in self.elements:
            p = self.vertices[list(e)]
            diam.append(max(np.linalg.norm(p[i] - p[j]) for i in range(3) for j in range(i)))
        self.element_diameters = np.array(diam)
        self.h_coarse = float(self.element_diameters.max())

        self._build_faces(boundary_tag)
        if not any(f.tag == "dirichlet" for f in self.faces):
            raise ValueError("the Dirichlet boundary must be nonempty")

    def _build_faces(self, boundary_tag):
        adj = {}
        for k, e in enumerate(self.elements):
            for a, b in ((e[0], e[1]), (e[1], e[2]), (e[2], e[0])):
                adj.setdefault((min(a, b), max(a, b)), []).append(k)
        self.faces = []
        face_of_pair = {}
        for pair, ks in sorted(adj.items()):
            if len(ks) > 2:
                raise ValueError("a face is shared by more than two elements")
            ks = sorted(ks)
            v0, v1 = pair
            t = self.vertices[v1] - self.vertices[v0]
            # outward normal of the lower-indexed element along this edge
            n = np.array([t[1], -t[0]])
            n /= np.linalg.norm(n)
            klow = ks[0]
            e = self.elements[klow]
            # orient n outward w.r.t. klow: check against the centroid
            cen = self.vertices[list(e)].mean(axis=0)
            mid = 0.5 * (self.vertices[v0] + self.vertices[v1])
            if np.dot(n, mid - cen) < 0:
                n = -n
            if len(ks) == 1:
                tag = boundary_tag(mid) if boundary_tag is not None else "dirichlet"
                if tag not in ("dirichlet", "neumann"):
                    raise ValueError(f"invalid boundary tag {tag!r}")
            else:
                tag = "interior"
            fid = len(self.faces)
            self.faces.append(Face(fid, v0, v1, n, tuple(ks), tag))
            face_of_pair[pair] = fid

        # per element: face ids in local edge order and orientation signs
        self.elem_face_ids = []
        self.elem_face_signs = []
        for k, e in enumerate(self.elements):
            fids, signs = [], []
            for a, b in ((e[0], e[1]), (e[1], e[2]), (e[2], e[0])):
                fid = face_of_pair[(min(a, b), max(a, b))]
                f = self.faces[fid]
                t = self.vertices[b] - self.vertices[a]
                n_out = np.array([t[1], -t[0]])
                n_out /= np.linalg.norm(n_out)
                signs.append(1 if np.dot(n_out, f.normal) > 0 else -1)
                fids.append(fid)
            self.elem_face_ids.append(fids)
            self.elem_face_signs.append(signs)

    @property
    def n_elements(self):
        return len(self.elements)


def build_structured_triangulation(n, boundary_tag=None):
    """n x n grid of squares on [0, 1]^2, each split along the same diagonal
    (lower-left to upper-right) into two CCW triangles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    elements = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            elements.append((v00, v10, v11))
            elements.append((v00, v11, v01))
    return GlobalPartition(vertices, elements, boundary_tag=boundary_tag)


# ---------------------------------------------------------------------------
# Skeleton mesh
# ---------------------------------------------------------------------------

@dataclass
class Segment:
    id: int
    face_id: int
    p0: np.ndarray
    p1: np.ndarray
    length: float
    # parameter interval along the face orientation (v0 -> v1)
    s0: float
    s1: float


class SkeletonMesh:
    """The refined face mesh: each non-Neumann coarse face split into 2^r
    equal segments, each carrying a vector-valued P_ell trace dof block with
    an orthonormal Legendre (modal) basis per component."""

    def __init__(self, partition, level, degree):
        if degree < 1:
            raise ValueError("trace degree must be >= 1")
        if level < 0:
            raise ValueError("refinement level must be >= 0")
        self.partition = partition
        self.level = level
        self.degree = degree
        self.segments = []
        self.face_segments = {}
        nseg = 2 ** level
        for f in partition.faces:
            if f.tag == "neumann":
                self.face_segments[f.id] = []
                continue
            a = partition.vertices[f.v0]
            b = partition.vertices[f.v1]
            ids = []
            for s in range(nseg):
                s0, s1 = s / nseg, (s + 1) / nseg
                p0 = a + s0 * (b - a)
                p1 = a + s1 * (b - a)
                seg = Segment(len(self.segments), f.id, p0, p1,
                              float(np.linalg.norm(p1 - p0)), s0, s1)
                self.segments.append(seg)
                ids.append(seg.id)
            self.face_segments[f.id] = ids
        self.h_skeleton = max((s.length for s in self.segments), default=0.0)
        self.dofs_per_segment = 2 * (degree + 1)
        self.n_dofs = len(self.segments) * self.dofs_per_segment

    def segment_dofs(self, seg_id):
        base = seg_id * self.dofs_per_segment
        return np.arange(base, base + self.dofs_per_segment)

    def basis_values(self, seg, s):
        """Trace basis values on a segment at parameters s in [0, 1] (local
        arclength fraction).  Returns (n_local_dofs, len(s), 2); local dof
        c * (degree + 1) + m is component c times Legendre mode m,
        orthonormal in L2 of the segment."""
        s = np.asarray(s, dtype=float)
        ell = self.degree
        out = np.zeros((self.dofs_per_segment, len(s), 2))
        x = 2 * s - 1
        for m in range(ell + 1):
            cm = np.zeros(m + 1)
            cm[m] = 1.0
            phi = np.polynomial.legendre.legval(x, cm) * np.sqrt((2 * m + 1) / seg.length)
            out[m, :, 0] = phi
            out[(ell + 1) + m, :, 1] = phi
        return out


def refine_skeleton(partition, level, degree):
    return SkeletonMesh(partition, level, degree)


# ---------------------------------------------------------------------------
# Local meshes
# ---------------------------------------------------------------------------

@dataclass
class BoundaryEdge:
    """A fine edge of a local mesh lying on the coarse element boundary."""
    v0: int
    v1: int
    triangle: int
    coarse_edge: int        # local edge index of the coarse triangle (0..2)
    segment: int            # global skeleton segment id (-1 on Neumann faces)
    face_s0: float          # parameter interval along the coarse face
    face_s1: float
    on_neumann: bool


class LocalMesh:
    """Conforming triangulation of one coarse element obtained by uniform
    red refinement, with the fine-boundary-edge-to-skeleton-segment map."""

    def __init__(self, element_id, mesh, depth, boundary_edges):
        self.element_id = element_id
        self.mesh = mesh
        self.depth = depth
        self.boundary_edges = boundary_edges

    @property
    def h_max(self):
        return self.mesh.h_max


def _lattice_triangulation(corners, depth):
    """Uniform barycentric-lattice refinement of a triangle; equivalent to
    `depth` rounds of red refinement and exactly reproducible."""
    A, B, C = (np.asarray(c, dtype=float) for c in corners)
    N = 2 ** depth
    idx = {}
    verts = []
    for j in range(N + 1):
        for i in range(N + 1 - j):
            idx[(i, j)] = len(verts)
            verts.append(A + (B - A) * (i / N) + (C - A) * (j / N))
    tris = []
    for j in range(N):
        for i in range(N - j):
            tris.append((idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]))
            if i + j < N - 1:
                tris.append((idx[(i + 1, j)], idx[(i + 1, j + 1)], idx[(i, j + 1)]))
    mesh = TriMesh(np.array(verts), np.array(tris))
    # fine edges along the three coarse edges, in coarse-edge parameter order
    edge_chains = []
    for ce, walk in enumerate((
        [(i, 0) for i in range(N + 1)],
        [(N - t, t) for t in range(N + 1)],
        [(0, N - t) for t in range(N + 1)],
    )):
        chain = [idx[ij] for ij in walk]
        edge_chains.append(chain)
    return mesh, idx, edge_chains


def build_matching_local_mesh(partition, element_id, skeleton, depth):
    """Red-refine coarse element `element_id` to `depth`, then refine further
    until every skeleton segment on its boundary is a union of fine edges."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    e = partition.elements[element_id]
    corners = [partition.vertices[v] for v in e]
    fids = partition.elem_face_ids[element_id]

    need = depth
    for le, fid in enumerate(fids):
        segs = skeleton.face_segments[fid]
        if not segs:
            continue
        r = np.log2(len(segs))
        if abs(r - round(r)) > 1e-9:
            raise ValueError("skeleton segments are not a dyadic subdivision")
        # verify segments are equal dyadic pieces of the face
        for j, sid in enumerate(segs):
            seg = skeleton.segments[sid]
            if abs(seg.s0 - j / len(segs)) > GEOM_TOL or abs(seg.s1 - (j + 1) / len(segs)) > GEOM_TOL:
                raise ValueError("skeleton segments do not align with a dyadic subdivision")
        need = max(need, int(round(r)))

    mesh, _, chains = _lattice_triangulation(corners, need)
    N = 2 ** need
    edge_adj = mesh.edges()

    boundary_edges = []
    for le, fid in enumerate(fids):
        face = partition.faces[fid]
        a, b = e[le], e[(le + 1) % 3]
        reversed_face = face.v0 != a  # local edge runs v1 -> v0 of the face
        segs = skeleton.face_segments[fid]
        on_neumann = face.tag == "neumann"
        chain = chains[le]
        per_seg = N // len(segs) if segs else 0
        for i in range(N):
            v0, v1 = chain[i], chain[i + 1]
            tri = edge_adj[(min(v0, v1), max(v0, v1))]
            assert len(tri) == 1
            t0, t1 = i / N, (i + 1) / N
            if reversed_face:
                fs0, fs1 = 1 - t1, 1 - t0
            else:
                fs0, fs1 = t0, t1
            if on_neumann:
                seg_id = -1
            else:
                seg_id = segs[int(min(fs0, fs1) * len(segs) + 0.5 / N)]
                seg = skeleton.segments[seg_id]
                if fs0 < seg.s0 - GEOM_TOL or fs1 > seg.s1 + GEOM_TOL:
                    raise ValueError("fine boundary edge not contained in one segment")
            boundary_edges.append(BoundaryEdge(v0, v1, tri[0], le, seg_id,
                                               fs0, fs1, on_neumann))
    return LocalMesh(element_id, mesh, need, boundary_edges)


# ---------------------------------------------------------------------------
# Refinement (well-posedness) conditions
# ---------------------------------------------------------------------------

@dataclass
class RefinementReport:
    ok: bool
    element_status: dict = field(default_factory=dict)  # K -> (bool, reason)


def check_refinement_conditions(k, ell, local_meshes, skeleton):
    """Advisory check of the sufficient local-refinement conditions for the
    global problem to be well posed: either (k >= ell+1 >= 2 and each
    boundary segment holds at least one fine node) or (k >= ell >= s and each
    segment interior holds at least 4 - s fine nodes, s in {1, 2, 3})."""
    if k < 1 or ell < 1:
        raise ValueError("degrees must be >= 1")
    report = RefinementReport(ok=True)
    for lm in local_meshes:
        counts = {}
        for be in lm.boundary_edges:
            if be.segment < 0:
                continue
            closure, interior = counts.setdefault(be.segment, [set(), set()])
            seg = skeleton.segments[be.segment]
            for v, s in ((be.v0, be.face_s0), (be.v1, be.face_s1)):
                closure.add(round(s, 12))
                if seg.s0 + GEOM_TOL < s < seg.s1 - GEOM_TOL:
                    interior.add(round(s, 12))
        status, reason = False, ""
        min_closure = min((len(c[0]) for c in counts.values()), default=0)
        min_interior = min((len(c[1]) for c in counts.values()), default=0)
        if k >= ell + 1 >= 2 and min_closure >= 1:
            status, reason = True, "case 1: k >= ell+1 and >= 1 node per segment"
        else:
            s = min(k, ell, 3)
            if k >= ell and min_interior >= 4 - s:
                status, reason = True, f"case 2 with s={s}"
            else:
                needed = 4 - s
                reason = (f"case 2 requires {needed} interior nodes per segment, "
                          f"found {min_interior}")
                if k >= ell + 1 >= 2:
                    reason = "case 1 requires 1 node per segment; " + reason
        report.element_status[lm.element_id] = (status, reason)
        report.ok = report.ok and status
    return report


# ---------------------------------------------------------------------------
# Plain meshes of the whole domain (single-level methods) and mesh I/O
# ---------------------------------------------------------------------------

def unit_square_mesh(n):
    """Structured n x n triangulation of [0, 1]^2 (same diagonal rule as the
    coarse partition) as a plain TriMesh."""
    part = build_structured_triangulation(n)
    return TriMesh(part.vertices, np.array(part.elements))


def write_partition(partition, stream_or_path):
    """Plain-text export: vertex list, element list, face list with tags."""
    own = isinstance(stream_or_path, (str, bytes))
    f = open(stream_or_path, "w") if own else stream_or_path
    try:
        f.write("# mhmelast coarse partition\n")
        f.write("# vertices <count>, then x y per line\n")
        f.write(f"vertices {len(partition.vertices)}\n")
        for x, y in partition.vertices:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        f.write(f"elements {partition.n_elements}\n")
        for e in partition.elements:
            f.write(" ".join(str(v) for v in e) + "\n")
        nb = sum(1 for fc in partition.faces if fc.is_boundary)
        f.write(f"boundary_faces {nb}\n")
        for fc in partition.faces:
            if fc.is_boundary:
                f.write(f"{fc.v0} {fc.v1} {fc.tag}\n")
    finally:
        if own:
            f.close()


def read_partition(stream_or_path):
    own = isinstance(stream_or_path, (str, bytes))
    f = open(stream_or_path) if own else stream_or_path
    try:
        tokens = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    finally:
        if own:
            f.close()
    it = iter(tokens)
    head = next(it)
    if head[0] != "vertices":
        raise ValueError("malformed partition file")
    nv = int(head[1])
    verts = []
    for _ in range(nv):
        x, y = next(it)
        verts.append((float(x), float(y)))
    head = next(it)
    ne = int(head[1])
    elements = []
    for _ in range(ne):
        elements.append(tuple(int(v) for v in next(it)))
    head = next(it)
    nb = int(head[1])
    tags = {}
    for _ in range(nb):
        a, b, tag = next(it)
        tags[(min(int(a), int(b)), max(int(a), int(b)))] = tag
    verts = np.array(verts)

    def boundary_tag(mid):
        # match by midpoint against the tagged pairs
        for (a, b), tag in tags.items():
            m = 0.5 * (verts[a] + verts[b])
            if np.linalg.norm(m - mid) < 1e-10:
                return tag
        return "dirichlet"

    area = _polygon_hull_area(verts, elements)
    return GlobalPartition(verts, elements, boundary_tag=boundary_tag, domain_area=area)


def _polygon_hull_area(verts, elements):
    area = 0.0
    for e in elements:
        p = verts[list(e)]
        area += 0.5 * _cross2(p[1] - p[0], p[2] - p[0])
    return area


def partition_to_string(partition):
    buf = io.StringIO()
    write_partition(partition, buf)
    return buf.getvalue()


def partition_from_string(text):
    return read_partition(io.StringIO(text))
