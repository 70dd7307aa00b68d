"""Coarse partitions, skeleton meshes, matching local meshes, and the
advisory refinement conditions."""

import io

import numpy as np
import pytest

from mhmelast import (build_matching_local_mesh, build_structured_triangulation,
                      check_refinement_conditions, quad_rule, read_partition,
                      refine_skeleton, unit_square_mesh, write_partition)
from mhmelast.mesh import TriMesh, partition_from_string, partition_to_string


# ---------------------------------------------------------------------------
# Coarse partition
# ---------------------------------------------------------------------------

def test_structured_counts_n4():
    part = build_structured_triangulation(4)
    assert part.n_elements == 32
    assert len(part.vertices) == 25
    assert len(part.faces) == 56
    assert abs(part.element_areas.sum() - 1.0) < 1e-14
    assert abs(part.h_coarse - np.sqrt(2) / 4) < 1e-14


def test_structured_counts_n1():
    part = build_structured_triangulation(1)
    assert part.n_elements == 2
    assert len(part.vertices) == 4
    assert len(part.faces) == 5


def test_structured_rejects_bad_n():
    with pytest.raises(ValueError):
        build_structured_triangulation(0)


def test_all_boundary_faces_dirichlet_by_default():
    part = build_structured_triangulation(3)
    for f in part.faces:
        if f.is_boundary:
            assert f.tag == "dirichlet"
        else:
            assert f.tag == "interior"


def test_face_normal_conventions():
    part = build_structured_triangulation(3)
    for f in part.faces:
        assert abs(np.linalg.norm(f.normal) - 1) < 1e-14
        mid = 0.5 * (part.vertices[f.v0] + part.vertices[f.v1])
        cen_low = part.vertices[list(part.elements[f.elements[0]])].mean(axis=0)
        # normal points away from the lower-indexed (or only) element
        assert np.dot(f.normal, mid - cen_low) > 0
        if not f.is_boundary:
            cen_high = part.vertices[
                list(part.elements[f.elements[1]])].mean(axis=0)
            assert np.dot(f.normal, cen_high - mid) > 0


def test_element_face_signs():
    part = build_structured_triangulation(2)
    for K in range(part.n_elements):
        e = part.elements[K]
        for le, (fid, sg) in enumerate(zip(part.elem_face_ids[K],
                                           part.elem_face_signs[K])):
            assert sg in (-1, 1)
            a, b = e[le], e[(le + 1) % 3]
            t = part.vertices[b] - part.vertices[a]
            n_out = np.array([t[1], -t[0]]) / np.linalg.norm(t)
            assert sg == (1 if np.dot(n_out, part.faces[fid].normal) > 0
                          else -1)
    # interior faces must carry opposite signs from their two elements
    for f in part.faces:
        if f.is_boundary:
            continue
        signs = []
        for K in f.elements:
            le = part.elem_face_ids[K].index(f.id)
            signs.append(part.elem_face_signs[K][le])
        assert sorted(signs) == [-1, 1]


def test_boundary_tag_callable():
    def tag(mid):
        return "neumann" if mid[0] > 1 - 1e-12 else "dirichlet"

    part = build_structured_triangulation(2, boundary_tag=tag)
    tags = {f.tag for f in part.faces if f.is_boundary}
    assert tags == {"dirichlet", "neumann"}


# ---------------------------------------------------------------------------
# Skeleton mesh
# ---------------------------------------------------------------------------

def test_skeleton_refinement_counts():
    part = build_structured_triangulation(4)
    sk = refine_skeleton(part, 2, 1)
    assert len(sk.segments) == 4 * 56
    assert sk.dofs_per_segment == 4
    assert sk.n_dofs == 4 * 4 * 56
    assert abs(sk.h_skeleton - np.sqrt(2) / 16) < 1e-14


def test_skeleton_h_halves_per_level():
    part = build_structured_triangulation(4)
    h = [refine_skeleton(part, r, 1).h_skeleton for r in range(3)]
    assert abs(h[0] / h[1] - 2) < 1e-12
    assert abs(h[1] / h[2] - 2) < 1e-12


def test_skeleton_segments_cover_faces():
    part = build_structured_triangulation(2)
    sk = refine_skeleton(part, 1, 2)
    for f in part.faces:
        ids = sk.face_segments[f.id]
        assert len(ids) == 2
        total = sum(sk.segments[s].length for s in ids)
        flen = np.linalg.norm(part.vertices[f.v1] - part.vertices[f.v0])
        assert abs(total - flen) < 1e-13


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_trace_basis_orthonormal(ell):
    part = build_structured_triangulation(2)
    sk = refine_skeleton(part, 1, ell)
    seg = sk.segments[3]
    rule = quad_rule("segment", 2 * ell + 2)
    mu = sk.basis_values(seg, rule.points)       # (dps, nq, 2)
    gram = np.einsum("q,iqc,jqc->ij", rule.weights * seg.length, mu, mu)
    assert np.abs(gram - np.eye(sk.dofs_per_segment)).max() < 1e-12


def test_skeleton_validation():
    part = build_structured_triangulation(2)
    with pytest.raises(ValueError):
        refine_skeleton(part, -1, 1)
    with pytest.raises(ValueError):
        refine_skeleton(part, 0, 0)


# ---------------------------------------------------------------------------
# Local meshes
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("depth", [0, 1, 2])
def test_local_mesh_counts(depth):
    part = build_structured_triangulation(2)
    sk = refine_skeleton(part, 0, 1)
    lm = build_matching_local_mesh(part, 0, sk, depth)
    assert lm.mesh.n_triangles == 4 ** depth
    assert abs(lm.mesh.areas.sum() - part.element_areas[0]) < 1e-14
    # 2^depth fine edges per coarse edge, three coarse edges
    assert len(lm.boundary_edges) == 3 * 2 ** depth


def test_local_mesh_matches_skeleton_refinement():
    # requesting depth 0 with a level-2 skeleton must refine to depth 2
    part = build_structured_triangulation(2)
    sk = refine_skeleton(part, 2, 1)
    lm = build_matching_local_mesh(part, 1, sk, 0)
    assert lm.depth == 2
    # every fine boundary edge sits inside exactly one skeleton segment
    for be in lm.boundary_edges:
        assert be.segment >= 0
        seg = sk.segments[be.segment]
        assert seg.s0 - 1e-12 <= min(be.face_s0, be.face_s1)
        assert max(be.face_s0, be.face_s1) <= seg.s1 + 1e-12


def test_local_mesh_boundary_edges_lie_on_segments():
    part = build_structured_triangulation(2)
    sk = refine_skeleton(part, 1, 1)
    lm = build_matching_local_mesh(part, 2, sk, 2)
    for be in lm.boundary_edges:
        seg = sk.segments[be.segment]
        face = part.faces[seg.face_id]
        a = part.vertices[face.v0]
        b = part.vertices[face.v1]
        # face_s0 < face_s1 follow the face orientation; the local chain
        # may traverse the face backwards, so match endpoints as a set
        targets = [a + s * (b - a) for s in (be.face_s0, be.face_s1)]
        for v in (be.v0, be.v1):
            x = lm.mesh.vertices[v]
            assert min(np.linalg.norm(x - t) for t in targets) < 1e-12


def test_local_mesh_rejects_negative_depth():
    part = build_structured_triangulation(1)
    sk = refine_skeleton(part, 0, 1)
    with pytest.raises(ValueError):
        build_matching_local_mesh(part, 0, sk, -1)


# ---------------------------------------------------------------------------
# Refinement conditions
# ---------------------------------------------------------------------------

def _meshes(n, level, ell, depth):
    part = build_structured_triangulation(n)
    sk = refine_skeleton(part, level, ell)
    lms = [build_matching_local_mesh(part, e, sk, depth)
           for e in range(part.n_elements)]
    return sk, lms


def test_refinement_conditions_equal_degrees():
    # k = ell = 1 needs 3 interior fine nodes per segment: depth 2 gives
    # exactly 3, depth 1 gives only 1
    sk, lms = _meshes(1, 0, 1, 2)
    rep = check_refinement_conditions(1, 1, lms, sk)
    assert rep.ok
    assert all(s for s, _ in rep.element_status.values())

    sk, lms = _meshes(1, 0, 1, 1)
    rep = check_refinement_conditions(1, 1, lms, sk)
    assert not rep.ok
    status, reason = rep.element_status[0]
    assert not status
    assert "requires 3 interior nodes per segment, found 1" in reason


def test_refinement_conditions_zero_depth_reason():
    sk, lms = _meshes(1, 0, 1, 0)
    rep = check_refinement_conditions(1, 1, lms, sk)
    _, reason = rep.element_status[0]
    assert "found 0" in reason


def test_refinement_conditions_higher_degree():
    # k >= ell + 1 only needs one node per segment closure: depth 0 passes
    sk, lms = _meshes(1, 0, 1, 0)
    rep = check_refinement_conditions(2, 1, lms, sk)
    assert rep.ok
    status, reason = rep.element_status[0]
    assert status and reason.startswith("case 1")


def test_refinement_conditions_monotone_in_depth():
    # once satisfied, further refinement cannot break the conditions
    for depth in (2, 3):
        sk, lms = _meshes(1, 0, 1, depth)
        assert check_refinement_conditions(1, 1, lms, sk).ok


def test_refinement_conditions_validation():
    sk, lms = _meshes(1, 0, 1, 1)
    with pytest.raises(ValueError):
        check_refinement_conditions(0, 1, lms, sk)


# ---------------------------------------------------------------------------
# Plain meshes and partition I/O
# ---------------------------------------------------------------------------

def test_unit_square_mesh():
    mesh = unit_square_mesh(2)
    assert mesh.n_triangles == 8
    assert abs(mesh.areas.sum() - 1.0) < 1e-14
    assert abs(mesh.h_max - np.sqrt(2) / 2) < 1e-14


def test_trimesh_rejects_cw_triangle():
    with pytest.raises(ValueError):
        TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                np.array([[0, 2, 1]]))


def test_partition_roundtrip(tmp_path):
    def tag(mid):
        return "neumann" if mid[1] < 1e-12 else "dirichlet"

    part = build_structured_triangulation(2, boundary_tag=tag)
    path = tmp_path / "part.txt"
    write_partition(part, str(path))
    back = read_partition(str(path))
    assert back.n_elements == part.n_elements
    assert np.allclose(back.vertices, part.vertices)
    assert back.elements == part.elements
    assert ([f.tag for f in back.faces] == [f.tag for f in part.faces])


def test_partition_string_roundtrip():
    part = build_structured_triangulation(1)
    text = partition_to_string(part)
    back = partition_from_string(text)
    assert back.elements == part.elements
    assert partition_to_string(back) == text


def test_read_partition_rejects_garbage():
    with pytest.raises(ValueError):
        read_partition(io.StringIO("nonsense 3\n"))
