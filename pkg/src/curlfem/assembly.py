"""Global degree-of-freedom numbering, quadrature assembly, PEC elimination.

Global numbering is entity-major: k moments per edge in ascending global
edge index, then (degree 2) two moments per face in ascending face index.
Per-cell orientation corrections are pure signs thanks to the canonical
cell vertex order: the zeroth edge moment flips with the edge direction,
the odd Legendre moment is direction-invariant, and the antisymmetric face
moment flips when the local face triple is the sorted triple with its last
two vertices swapped.

Element integrals are computed on the reference tetrahedron with the
covariant transformation identities: with Jacobian J, determinant d and a
reference basis function u with curl c,

    physical value = J^{-T} u,     physical curl = (J c) / d,

so the curl-curl term carries 1/d and the mass and load terms carry d as
volume factors.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .reference import geometric_shapes, nedelec_space, quadrature
from .smallmat import det3, inv3

_CELL_BLOCK = 2048   # cells per assembly batch, bounds peak memory


@dataclass(frozen=True)
class DofMap:
    """Cell-local to global curl-conforming DOF layout with orientation signs."""

    k: int
    num_dofs: int
    num_edge_dofs: int
    cell_dofs: np.ndarray      # (ncells, nlocal) global indices
    cell_signs: np.ndarray     # (ncells, nlocal) +-1
    boundary: np.ndarray       # (num_dofs,) bool, True on boundary entities


def build_dof_map(mesh, k):
    """Deterministic global numbering for the degree-k space on a mesh."""
    basis = nedelec_space(k)
    ncells = mesh.num_cells
    nedge = len(mesh.edges) * k
    nface = len(mesh.faces) * 2 if k == 2 else 0
    nlocal = basis.dim
    cell_dofs = np.empty((ncells, nlocal), dtype=np.int64)
    cell_signs = np.ones((ncells, nlocal), dtype=np.int8)
    for le in range(6):
        for j in range(k):
            col = le * k + j
            cell_dofs[:, col] = mesh.cell_edges[:, le] * k + j
            if j == 0:
                cell_signs[:, col] = mesh.edge_signs[:, le]
    if k == 2:
        for lf in range(4):
            for m in range(2):
                col = 12 + lf * 2 + m
                cell_dofs[:, col] = nedge + mesh.cell_faces[:, lf] * 2 + m
                if m == 1:
                    cell_signs[:, col] = mesh.face_flips[:, lf]
    boundary = np.zeros(nedge + nface, dtype=bool)
    for j in range(k):
        boundary[np.nonzero(mesh.boundary_edges)[0] * k + j] = True
    if k == 2:
        for m in range(2):
            boundary[nedge + np.nonzero(mesh.boundary_faces)[0] * 2 + m] = True
    return DofMap(k=k, num_dofs=nedge + nface, num_edge_dofs=nedge,
                  cell_dofs=cell_dofs, cell_signs=cell_signs, boundary=boundary)


@dataclass(frozen=True)
class MaterialCoefficients:
    """Coefficients of the cavity problem, evaluable on the hold-all ball.

    The assembled forms are
        sum_K Q1(mu_inv curl U . curl V) - omega^2 Q2(eps U . V)
        and -i omega Q3(J . V),
    with mu_inv and eps symmetric 3x3 matrix fields and J a vector field.
    """

    mu_inv: callable
    eps: callable
    omega: float
    current: callable
    tag: str = "custom"

    def validate_symmetry(self, points, tol=1e-12):
        for name, fn in (("mu_inv", self.mu_inv), ("eps", self.eps)):
            m = np.asarray(fn(points))
            dev = np.abs(m - m.swapaxes(-1, -2)).max()
            if dev > tol:
                raise ValueError(f"{name} is not symmetric (deviation {dev:.2e})")


def isotropic(value):
    """Constant isotropic 3x3 coefficient field."""
    def coeff(points):
        n = len(np.atleast_2d(points))
        return np.broadcast_to(value * np.eye(3), (n, 3, 3))
    return coeff


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: DofMap
    mesh: object
    k: int
    quadrature_degrees: dict
    warnings: list = field(default_factory=list)


def default_quadrature_degrees(k, geo_order, s=None):
    """Exactness defaults absorbing the non-polynomial factors of curved cells."""
    s = k if s is None else s
    q1 = max(2 * k + s - 3, 2 * (geo_order - 1) + 2 * k)
    q23 = max(3 * k + s - 3, 3 * geo_order)
    return q1, q23, q23


def _basis_tables(k, degree):
    rule = quadrature(degree)
    basis = nedelec_space(k)
    return rule, basis.eval_values(rule.points), basis.eval_curls(rule.points)


def assemble(mesh, k, materials, q1_degree=None, q2_degree=None, q3_degree=None,
             s=None):
    """Assemble the sesquilinear form and load on a straight or curved mesh."""
    s = k if s is None else s
    d1, d2, d3 = default_quadrature_degrees(k, mesh.order, s)
    q1 = d1 if q1_degree is None else q1_degree
    q2 = d2 if q2_degree is None else q2_degree
    q3 = d3 if q3_degree is None else q3_degree
    warnings = []
    if q1 < 2 * k + s - 3:
        warnings.append(f"q1 exactness {q1} below threshold {2 * k + s - 3}")
    if min(q2, q3) < 3 * k + s - 3:
        warnings.append(f"q2/q3 exactness {min(q2, q3)} below threshold "
                        f"{3 * k + s - 3}")
    dof_map = build_dof_map(mesh, k)
    rule1, _, curls1 = _basis_tables(k, q1)
    rule2, vals2, _ = _basis_tables(k, q2)
    rule3, vals3, _ = _basis_tables(k, q3)
    materials.validate_symmetry(mesh.map_points(rule2.points[:1])[:, 0, :])

    nloc = curls1.shape[0]
    ncells = mesh.num_cells
    rows, cols, data = [], [], []
    rhs = np.zeros(dof_map.num_dofs, dtype=complex)
    omega = materials.omega
    for start in range(0, ncells, _CELL_BLOCK):
        stop = min(start + _CELL_BLOCK, ncells)
        block = slice(start, stop)
        nodes = mesh.cell_nodes()[block]
        ke = _stiffness_block(mesh, nodes, rule1, curls1, materials)
        ke = ke - omega ** 2 * _mass_block(mesh, nodes, rule2, vals2, materials)
        signs = dof_map.cell_signs[block].astype(float)
        ke *= signs[:, :, None] * signs[:, None, :]
        gdofs = dof_map.cell_dofs[block]
        rows.append(np.repeat(gdofs, nloc, axis=1).ravel())
        cols.append(np.tile(gdofs, (1, nloc)).ravel())
        data.append(ke.reshape(stop - start, -1).ravel())
        be = _load_block(mesh, nodes, rule3, vals3, materials)
        np.add.at(rhs, gdofs.ravel(), (be * signs).ravel())
    n = dof_map.num_dofs
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    return AssembledSystem(matrix=matrix, rhs=rhs, dof_map=dof_map, mesh=mesh,
                           k=k, quadrature_degrees={"q1": q1, "q2": q2, "q3": q3},
                           warnings=warnings)


def _geometry(mesh, nodes, points):
    grads = geometric_shapes(mesh.order).gradients(points)
    shapes = geometric_shapes(mesh.order).values(points)
    jac = np.einsum('mnc,qnd->mqcd', nodes, grads)
    det = det3(jac)
    if (det <= 0).any():
        bad = np.nonzero((det <= 0).any(axis=1))[0]
        raise ValueError(f"singular Jacobian at quadrature point in cell(s) {bad}")
    phys = np.einsum('mnc,qn->mqc', nodes, shapes)
    return jac, det, phys


def _stiffness_block(mesh, nodes, rule, curls, materials):
    jac, det, phys = _geometry(mesh, nodes, rule.points)
    mu_inv = np.asarray(materials.mu_inv(phys.reshape(-1, 3))).reshape(
        phys.shape[0], phys.shape[1], 3, 3)
    tcurl = np.einsum('mqcd,iqd->mqic', jac, curls)
    mcurl = np.einsum('mqcd,mqjd->mqjc', mu_inv, tcurl)
    factor = rule.weights[None, :] / det
    return np.einsum('mqic,mqjc,mq->mij', tcurl, mcurl, factor)


def _mass_block(mesh, nodes, rule, vals, materials):
    jac, det, phys = _geometry(mesh, nodes, rule.points)
    eps = np.asarray(materials.eps(phys.reshape(-1, 3))).reshape(
        phys.shape[0], phys.shape[1], 3, 3)
    jinv = inv3(jac, det)
    tval = np.einsum('mqdc,iqd->mqic', jinv, vals)
    eval_ = np.einsum('mqcd,mqjd->mqjc', eps, tval)
    factor = rule.weights[None, :] * det
    return np.einsum('mqic,mqjc,mq->mij', tval, eval_, factor)


def _load_block(mesh, nodes, rule, vals, materials):
    jac, det, phys = _geometry(mesh, nodes, rule.points)
    cur = np.asarray(materials.current(phys.reshape(-1, 3))).reshape(
        phys.shape[0], phys.shape[1], 3)
    jinv = inv3(jac, det)
    tval = np.einsum('mqdc,iqd->mqic', jinv, vals)
    factor = rule.weights[None, :] * det
    return -1j * materials.omega * np.einsum('mqc,mqic,mq->mi', cur, tval, factor)


@dataclass
class ReducedSystem:
    """PEC-constrained system with the embedding back to the full DOF vector."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray       # global indices of the retained DOFs
    full_size: int
    dof_map: DofMap
    mesh: object
    k: int
    quadrature_degrees: dict

    def embed(self, reduced_vector):
        full = np.zeros(self.full_size, dtype=complex)
        full[self.interior] = reduced_vector
        return full


def apply_pec(system):
    """Eliminate boundary DOFs (homogeneous tangential-trace constraint)."""
    interior = np.nonzero(~system.dof_map.boundary)[0]
    if len(interior) == 0:
        raise ValueError("empty interior system: every DOF sits on the boundary")
    matrix = system.matrix[interior][:, interior].tocsr()
    return ReducedSystem(matrix=matrix, rhs=system.rhs[interior],
                         interior=interior, full_size=system.dof_map.num_dofs,
                         dof_map=system.dof_map, mesh=system.mesh, k=system.k,
                         quadrature_degrees=system.quadrature_degrees)


def dump_matrix_market(system, matrix_path, rhs_path):
    """ASCII Matrix Market dump of the operator and load for external checks."""
    scipy.io.mmwrite(matrix_path, sp.coo_matrix(system.matrix))
    scipy.io.mmwrite(rhs_path, system.rhs[:, None])
