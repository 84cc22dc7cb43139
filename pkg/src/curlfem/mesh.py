"""Tetrahedral meshes of order 1 (straight) and 2 (quadratic), built in or read.

Cells are stored in a canonical vertex order: corner indices ascending, with
the last two swapped when needed to keep the straight-skeleton Jacobian
determinant positive.  In that form at most one local edge (edge 5) runs
against the global low-to-high direction and at most two local faces (faces
0 and 1) differ from their sorted vertex triple, and then only by swapping
the last two vertices.  The degree-of-freedom orientation machinery relies
on exactly this property.

Node layout per cell: 4 corners, then (order 2) the 6 mid-edge nodes in the
reference edge order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
"""
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .reference import EDGES, FACES, geometric_shapes, quadrature
from .smallmat import cofactor3, det3, inv3

MAX_BALL_LEVEL = 4
MAX_CUBE_LEVEL = 5

# octahedron cycles around each choice of diagonal in the red-refinement core;
# keyed by the pair of opposite mid-edge slots (0..5 in reference edge order)
_OCT_DIAGONALS = ((0, 5), (1, 4), (2, 3))
_OCT_CYCLES = {
    (0, 5): (1, 2, 4, 3),
    (1, 4): (0, 2, 5, 3),
    (2, 3): (0, 1, 5, 4),
}


class MeshError(ValueError):
    pass


class Mesh:
    """Immutable tetrahedral mesh with connectivity and boundary tables."""

    def __init__(self, vertices, cells, order=1, validate=True):
        if order not in (1, 2):
            raise MeshError(f"geometric order {order} unsupported")
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if cells.ndim != 2 or cells.shape[1] != (4 if order == 1 else 10):
            raise MeshError("cell array shape does not match the mesh order")
        if len(cells) == 0:
            raise MeshError("mesh has no cells")
        self.order = order
        self.vertices = vertices
        self.cells = self._canonicalize(vertices, cells, order)
        self._build_connectivity()
        self._classify_boundary()
        diffs = self.vertices[self.cells[:, 1:4]] - self.vertices[self.cells[:, :1]]
        self._corner_dets = det3(diffs.transpose(0, 2, 1))
        corners = self.vertices[self.cells[:, :4]]
        pair_idx = list(combinations(range(4), 2))
        seps = np.stack([np.linalg.norm(corners[:, i] - corners[:, j], axis=1)
                         for i, j in pair_idx], axis=1)
        self.cell_diameters = seps.max(axis=1)
        # mean diameter: the few boundary cells stretched by sphere projection
        # make the max-diameter ratio drift well below 2 per refinement at
        # coarse levels, which skews every measured convergence order
        self.h = float(self.cell_diameters.mean())
        self.h_max = float(self.cell_diameters.max())
        if validate:
            self._validate()

    # -- construction ---------------------------------------------------------

    @staticmethod
    def _canonicalize(vertices, cells, order):
        corners = cells[:, :4]
        if (np.sort(corners, axis=1)[:, :-1] == np.sort(corners, axis=1)[:, 1:]).any():
            raise MeshError("degenerate cell with repeated vertices")
        perm = np.argsort(corners, axis=1)
        sorted_corners = np.take_along_axis(corners, perm, axis=1)
        d = det3((vertices[sorted_corners[:, 1:]]
                  - vertices[sorted_corners[:, :1]]).transpose(0, 2, 1))
        if (d == 0).any():
            raise MeshError(f"flat cell(s): {np.nonzero(d == 0)[0].tolist()}")
        flip = d < 0
        perm[flip] = perm[flip][:, [0, 1, 3, 2]]
        out = np.take_along_axis(corners, perm, axis=1)
        if order == 2:
            edge_slot = {}
            for k, (a, b) in enumerate(EDGES):
                edge_slot[(a, b)] = k
                edge_slot[(b, a)] = k
            mids = np.empty((len(cells), 6), dtype=np.int64)
            for k, (a, b) in enumerate(EDGES):
                # mid node of new local edge (a, b) sits where the old cell
                # stored the edge between the same two original slots
                old = np.stack([perm[:, a], perm[:, b]], axis=1)
                slots = np.array([edge_slot[(i, j)] for i, j in old])
                mids[:, k] = np.take_along_axis(cells[:, 4:], slots[:, None], axis=1)[:, 0]
            out = np.hstack([out, mids])
        return out

    def _build_connectivity(self):
        corners = self.cells[:, :4]
        edge_pairs = np.sort(
            corners[:, np.array(EDGES)].reshape(-1, 2), axis=1)
        self.edges, inv = np.unique(edge_pairs, axis=0, return_inverse=True)
        self.cell_edges = inv.reshape(-1, 6)
        face_triples = np.sort(
            corners[:, np.array(FACES)].reshape(-1, 3), axis=1)
        self.faces, inv = np.unique(face_triples, axis=0, return_inverse=True)
        self.cell_faces = inv.reshape(-1, 4)
        # local edge/face orientation relative to global (sorted) entities
        local_edges = corners[:, np.array(EDGES)]
        self.edge_signs = np.where(local_edges[..., 0] < local_edges[..., 1], 1, -1)
        local_faces = corners[:, np.array(FACES)]
        sorted_faces = np.sort(local_faces, axis=2)
        identity = (local_faces == sorted_faces).all(axis=2)
        swapped = (local_faces == sorted_faces[:, :, [0, 2, 1]]).all(axis=2)
        if not (identity | swapped).all():
            raise MeshError("cell canonicalization failed to bound face orientations")
        self.face_flips = np.where(identity, 1, -1)
        if self.order == 2:
            self.edge_midnodes = np.full(len(self.edges), -1, dtype=np.int64)
            self.edge_midnodes[self.cell_edges.ravel()] = self.cells[:, 4:].ravel()

    def _classify_boundary(self):
        counts = np.bincount(self.cell_faces.ravel(), minlength=len(self.faces))
        if counts.max() > 2:
            raise MeshError("face shared by more than two cells")
        self.boundary_faces = counts == 1
        self.boundary_edges = np.zeros(len(self.edges), dtype=bool)
        edge_key = {tuple(e): i for i, e in enumerate(self.edges)}
        for f in self.faces[self.boundary_faces]:
            for a, b in combinations(f, 2):
                self.boundary_edges[edge_key[(a, b)]] = True
        self.boundary_vertices = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_vertices[self.faces[self.boundary_faces].ravel()] = True
        if self.order == 2:
            self.boundary_vertices[self.edge_midnodes[self.boundary_edges]] = True

    def _validate(self):
        used = np.unique(self.cells.ravel())
        uniq = np.unique(self.vertices[used], axis=0)
        if len(uniq) != len(used):
            raise MeshError("duplicate vertex coordinates")
        if (self._corner_dets <= 0).any():
            bad = np.nonzero(self._corner_dets <= 0)[0]
            raise MeshError(f"non-positive cell volume in cell(s) {bad.tolist()}")
        if self.order == 2:
            pts = quadrature(5).points
            d = det3(self.jacobians(pts))
            if (d <= 0).any():
                bad = np.nonzero((d <= 0).any(axis=1))[0]
                raise MeshError(
                    f"non-positive Jacobian after curving in cell(s) {bad.tolist()}")

    # -- geometry -------------------------------------------------------------

    @property
    def num_cells(self):
        return len(self.cells)

    def cell_nodes(self):
        """Node coordinates per cell, shape (ncells, nnodes, 3)."""
        return self.vertices[self.cells]

    def map_points(self, ref_points):
        """Physical images of reference points in every cell, (ncells, npts, 3)."""
        shapes = geometric_shapes(self.order).values(ref_points)
        return np.einsum('mnc,qn->mqc', self.cell_nodes(), shapes)

    def jacobians(self, ref_points):
        """Geometric map Jacobians in every cell, (ncells, npts, 3, 3)."""
        grads = geometric_shapes(self.order).gradients(ref_points)
        return np.einsum('mnc,qnd->mqcd', self.cell_nodes(), grads)


class GeometricMap:
    """The reference-to-physical map of a single cell."""

    def __init__(self, mesh, cell):
        if not 0 <= cell < mesh.num_cells:
            raise IndexError(f"cell index {cell} out of range")
        self.cell = int(cell)
        self.nodes = mesh.vertices[mesh.cells[cell]]
        self.shapes = geometric_shapes(mesh.order)

    def map(self, ref_points):
        return self.shapes.values(ref_points) @ self.nodes

    def jacobian(self, ref_points):
        return np.einsum('qnd,nc->qcd', self.shapes.gradients(ref_points), self.nodes)

    def det(self, ref_points):
        return det3(self.jacobian(ref_points))

    def cofactor(self, ref_points):
        return cofactor3(self.jacobian(ref_points))

    def find_reference(self, x, tol=1e-12, maxiter=40):
        """Invert the map at a single physical point by Newton iteration."""
        x = np.asarray(x, dtype=float)
        ref = np.full(3, 0.25)
        for _ in range(maxiter):
            r = self.map(ref[None, :])[0] - x
            if np.linalg.norm(r) < tol:
                return ref
            j = self.jacobian(ref[None, :])[0]
            ref = ref - np.linalg.solve(j, r)
            ref = np.clip(ref, -0.25, 1.25)
        raise RuntimeError(f"map inversion did not converge in cell {self.cell}")


def element_map(mesh, cell):
    """Geometric map of one cell with Jacobian/determinant/cofactor access."""
    return GeometricMap(mesh, cell)


@dataclass(frozen=True)
class MeshQualityReport:
    h: float
    min_det: float
    max_det: float
    theta: float
    jacobian_scale: float      # sup ||dT||_F / h over sampled points
    inverse_scale: float       # sup ||dT^-1||_F * h over sampled points


def quality_check(mesh, sample_exactness=5):
    """Sample all cell maps on a fixed quadrature point set and report bounds."""
    pts = quadrature(sample_exactness).points
    jac = mesh.jacobians(pts)
    dets = det3(jac)
    per_cell_min = dets.min(axis=1)
    per_cell_max = dets.max(axis=1)
    theta = float((per_cell_max / per_cell_min).max()) if (per_cell_min > 0).all() \
        else float("inf")
    jnorm = np.linalg.norm(jac, axis=(2, 3))
    inorm = np.linalg.norm(inv3(jac, dets), axis=(2, 3))
    return MeshQualityReport(
        h=mesh.h,
        min_det=float(dets.min()),
        max_det=float(dets.max()),
        theta=theta,
        jacobian_scale=float(jnorm.max() / mesh.h),
        inverse_scale=float(inorm.max() * mesh.h),
    )


def assert_star_shaped(mesh, margin=1e-10):
    """Require the origin strictly on the interior side of each boundary face."""
    tris = mesh.vertices[mesh.faces[mesh.boundary_faces]]
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    offset = np.einsum('fc,fc->f', n, tris[:, 0])
    # orient normals outward using the owning cell's interior point
    owner = np.nonzero(mesh.boundary_faces[mesh.cell_faces])
    centers = mesh.vertices[mesh.cells[:, :4]].mean(axis=1)
    face_owner = np.full(len(mesh.faces), -1, dtype=np.int64)
    face_owner[mesh.cell_faces[owner]] = owner[0]
    inner = centers[face_owner[mesh.boundary_faces]]
    side = np.einsum('fc,fc->f', n, inner) - offset
    signed = offset * np.sign(-side)    # positive when origin is interior
    scale = np.linalg.norm(n, axis=1)
    if not (signed / scale > margin).all():
        raise MeshError("mesh is not star-shaped with respect to the origin")


# ---------------------------------------------------------------------------
# built-in generators


def _seed_octahedron():
    verts = [np.zeros(3)]
    for i in range(3):
        for s in (1.0, -1.0):
            e = np.zeros(3)
            e[i] = s
            verts.append(e)
    cells = []
    idx = lambda axis, s: 1 + 2 * axis + (0 if s > 0 else 1)
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                cells.append([0, idx(0, sx), idx(1, sy), idx(2, sz)])
    return np.array(verts), np.array(cells, dtype=np.int64)


def _boundary_edge_set(cells):
    faces = {}
    for c in cells:
        for tri in combinations(sorted(c), 3):
            faces[tri] = faces.get(tri, 0) + 1
    bedges = set()
    for tri, count in faces.items():
        if count == 1:
            for e in combinations(tri, 2):
                bedges.add(e)
    return bedges


def _refine_once(verts, cells, project_boundary):
    verts = [v for v in verts]
    bedges = _boundary_edge_set(cells)
    midcache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in midcache:
            p = 0.5 * (verts[a] + verts[b])
            if project_boundary and key in bedges:
                p = p / np.linalg.norm(p)
            midcache[key] = len(verts)
            verts.append(p)
        return midcache[key]

    out = []
    for c in cells:
        m = [midpoint(c[i], c[j]) for i, j in EDGES]
        out += [[c[0], m[0], m[1], m[2]],
                [c[1], m[0], m[3], m[4]],
                [c[2], m[1], m[3], m[5]],
                [c[3], m[2], m[4], m[5]]]
        lengths = [np.linalg.norm(verts[m[a]] - verts[m[b]]) for a, b in _OCT_DIAGONALS]
        a, b = _OCT_DIAGONALS[int(np.argmin(lengths))]
        cyc = _OCT_CYCLES[(a, b)]
        for i in range(4):
            out.append([m[a], m[b], m[cyc[i]], m[cyc[(i + 1) % 4]]])
    return np.array(verts), np.array(out, dtype=np.int64)


def _attach_midnodes(verts, cells, project_boundary):
    verts = [v for v in verts]
    bedges = _boundary_edge_set(cells)
    midcache = {}

    def midnode(a, b):
        key = (min(a, b), max(a, b))
        if key not in midcache:
            p = 0.5 * (verts[a] + verts[b])
            if project_boundary and key in bedges:
                p = p / np.linalg.norm(p)
            midcache[key] = len(verts)
            verts.append(p)
        return midcache[key]

    wide = []
    for c in cells:
        wide.append(list(c) + [midnode(c[i], c[j]) for i, j in EDGES])
    return np.array(verts), np.array(wide, dtype=np.int64)


def generate_ball_mesh(level, order=1):
    """Mesh of the unit ball: octahedron seed, red refinement, sphere projection.

    Each level halves the mesh size by uniform 8-subdivision; boundary
    vertices (and, for order 2, boundary mid-edge nodes) are projected onto
    the unit sphere radially.
    """
    if not 0 <= level <= MAX_BALL_LEVEL:
        raise ValueError(f"ball mesh level must lie in [0, {MAX_BALL_LEVEL}]")
    verts, cells = _seed_octahedron()
    for _ in range(level):
        verts, cells = _refine_once(verts, cells, project_boundary=True)
    if order == 2:
        verts, cells = _attach_midnodes(verts, cells, project_boundary=True)
    return Mesh(verts, cells, order=order)


def generate_cube_mesh(level, order=1):
    """Uniform Kuhn tetrahedralization of the unit cube, 6 tets per sub-cube."""
    if not 0 <= level <= MAX_CUBE_LEVEL:
        raise ValueError(f"cube mesh level must lie in [0, {MAX_CUBE_LEVEL}]")
    if order != 1:
        raise ValueError("cube meshes are exact; only order 1 is provided")
    n = 2 ** level
    axis = np.linspace(0.0, 1.0, n + 1)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    verts = grid.reshape(-1, 3)
    vid = lambda i, j, k: (i * (n + 1) + j) * (n + 1) + k
    cells = []
    steps = {0: (1, 0, 0), 1: (0, 1, 0), 2: (0, 0, 1)}
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for perm in permutations(range(3)):
                    path = [(i, j, k)]
                    for axis_id in perm:
                        di, dj, dk = steps[axis_id]
                        x, y, z = path[-1]
                        path.append((x + di, y + dj, z + dk))
                    cells.append([vid(*p) for p in path])
    return Mesh(verts, np.array(cells, dtype=np.int64), order=1)
