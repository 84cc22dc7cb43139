"""Canonical curl-conforming interpolation and discrete field evaluation.

Global degrees of freedom are moments over the physical mesh entities,
parameterized from the entity's node set: edges run from the lower to the
higher global vertex index (quadratic through the mid-edge node on curved
meshes) and faces use their sorted vertex triple.  The covariant pull-back
turns these into exactly the reference-element functionals, so cell-local
coefficients are the global values times the orientation signs.
"""
import numpy as np

from .assembly import build_dof_map
from .reference import gauss_01, nedelec_space, triangle_quadrature
from .smallmat import det3, inv3
from .transforms import ElementPullback, _patch_shape_grads, _patch_shapes
from .mesh import element_map

_EDGE_GAUSS = 6
_FACE_EXACTNESS = 7


class FemFunction:
    """A member of the discrete curl-conforming space on a mesh."""

    def __init__(self, mesh, k, coefficients, dof_map=None):
        self.mesh = mesh
        self.k = k
        self.basis = nedelec_space(k)
        self.dof_map = build_dof_map(mesh, k) if dof_map is None else dof_map
        coefficients = np.asarray(coefficients, dtype=complex)
        if coefficients.shape != (self.dof_map.num_dofs,):
            raise ValueError("coefficient vector has the wrong length")
        self.coefficients = coefficients

    def _local_coefficients(self, cells=slice(None)):
        return (self.coefficients[self.dof_map.cell_dofs[cells]]
                * self.dof_map.cell_signs[cells])

    def values_at(self, ref_points, cells=slice(None)):
        """Field values at reference points in each cell, (ncells, npts, 3)."""
        coef = self._local_coefficients(cells)
        vals = self.basis.eval_values(ref_points)
        ref_field = np.einsum('mi,iqc->mqc', coef, vals)
        jac = self.mesh.jacobians(ref_points)[cells]
        return np.einsum('mqdc,mqd->mqc', inv3(jac), ref_field)

    def curls_at(self, ref_points, cells=slice(None)):
        """Curl values at reference points in each cell, (ncells, npts, 3)."""
        coef = self._local_coefficients(cells)
        curls = self.basis.eval_curls(ref_points)
        ref_field = np.einsum('mi,iqc->mqc', coef, curls)
        jac = self.mesh.jacobians(ref_points)[cells]
        det = det3(jac)
        return np.einsum('mqcd,mqd->mqc', jac, ref_field) / det[..., None]

    def cell_values(self, cell, ref_points):
        return self.values_at(ref_points, cells=np.array([cell]))[0]

    def cell_curls(self, cell, ref_points):
        return self.curls_at(ref_points, cells=np.array([cell]))[0]


def local_interpolate(mesh, cell, field, k):
    """Reference-functional coefficients of one cell's canonical interpolant."""
    basis = nedelec_space(k)
    pullback = ElementPullback(element_map(mesh, cell))
    return basis.apply_dofs(pullback.forward(field).value)


def _edge_geometry(mesh, t):
    """Edge parameterizations at nodes t: points and tangents, (E, G, 3)."""
    va = mesh.vertices[mesh.edges[:, 0]]
    vb = mesh.vertices[mesh.edges[:, 1]]
    if mesh.order == 1:
        pts = va[:, None, :] + t[None, :, None] * (vb - va)[:, None, :]
        tan = np.broadcast_to((vb - va)[:, None, :], pts.shape)
        return pts, tan
    mid = mesh.vertices[mesh.edge_midnodes]
    s0, sm, s1 = (1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)
    d0, dm, d1 = 4 * t - 3, 4 - 8 * t, 4 * t - 1
    pts = (va[:, None, :] * s0[None, :, None] + mid[:, None, :] * sm[None, :, None]
           + vb[:, None, :] * s1[None, :, None])
    tan = (va[:, None, :] * d0[None, :, None] + mid[:, None, :] * dm[None, :, None]
           + vb[:, None, :] * d1[None, :, None])
    return pts, tan


def _face_geometry(mesh, bary):
    """Face patch points and parametric tangents at (Q, 2) barycentric nodes."""
    corners = mesh.vertices[mesh.faces]
    if mesh.order == 1:
        nodes = corners
    else:
        edge_key = {tuple(e): i for i, e in enumerate(mesh.edges)}
        mids = np.empty((len(mesh.faces), 3), dtype=np.int64)
        for i, (a, b, c) in enumerate(mesh.faces):
            mids[i] = [edge_key[(a, b)], edge_key[(a, c)], edge_key[(b, c)]]
        nodes = np.concatenate(
            [corners, mesh.vertices[mesh.edge_midnodes[mids]]], axis=1)
    shapes = _patch_shapes(bary, mesh.order)
    grads = _patch_shape_grads(bary, mesh.order)
    pts = np.einsum('fnc,qn->fqc', nodes, shapes)
    tans = np.einsum('fnc,qnd->fqcd', nodes, grads)   # (..., 3, 2)
    return pts, tans


def global_interpolate(mesh, k, field):
    """Canonical interpolant of a smooth field on the whole mesh."""
    dof_map = build_dof_map(mesh, k)
    coeffs = np.zeros(dof_map.num_dofs, dtype=complex)
    t, w = gauss_01(_EDGE_GAUSS)
    pts, tan = _edge_geometry(mesh, t)
    vals = np.asarray(field.value(pts.reshape(-1, 3))).reshape(pts.shape)
    tangential = np.einsum('egc,egc->eg', vals, tan)
    legendre = np.stack([np.ones_like(t), 2.0 * t - 1.0])
    for j in range(k):
        coeffs[j:dof_map.num_edge_dofs:k] = tangential @ (w * legendre[j])
    if k == 2:
        tri = triangle_quadrature(_FACE_EXACTNESS)
        pts, tans = _face_geometry(mesh, tri.points)
        vals = np.asarray(field.value(pts.reshape(-1, 3))).reshape(pts.shape)
        d1, d2 = tans[..., 0], tans[..., 1]
        sym = np.einsum('fqc,fqc,q->f', vals, d1 + d2, tri.weights)
        asym = np.einsum('fqc,fqc,q->f', vals, d1 - d2, tri.weights)
        base = dof_map.num_edge_dofs
        coeffs[base::2] = sym
        coeffs[base + 1::2] = asym
    return FemFunction(mesh, k, coeffs, dof_map=dof_map)
