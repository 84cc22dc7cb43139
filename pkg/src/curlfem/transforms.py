"""Covariant pull-backs and star-shaped domain maps with discrepancy metrics.

Element level: the pull-back V -> dT^T (V o T) carries fields on a cell to
the reference tetrahedron; curls transport through the cofactor (adjugate)
matrix.  Domain level: a radial blend maps the meshed domain onto the unit
ball along rays from the origin, fixing a core ball pointwise, and extends
to a hold-all ball so composition and inversion stay defined slightly
outside the mesh.  Its distance from the identity in sup norm (d0) and with
first derivatives (d1) is estimated on a fixed, deterministic sample set:
the degree-3 quadrature points of every cell plus a barycentric lattice on
every boundary face sampled on the surface and at fixed radial factors.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import assert_star_shaped
from .reference import quadrature
from .smallmat import cofactor3, det3, inv3

_BOUNDARY_LATTICE = 6          # barycentric subdivisions per boundary face
_SHELL_FACTORS = (0.3, 0.6, 0.9)
_FD_SCALE = 1e-6               # finite-difference step = _FD_SCALE * mesh h


@dataclass(frozen=True)
class Field:
    """A vector field given by callables for values and curls, (N,3)->(N,3)."""

    value: callable
    curl: callable


class ElementPullback:
    """Covariant pull-back between one cell and the reference tetrahedron."""

    def __init__(self, geometric_map):
        self.map = geometric_map

    def forward(self, field):
        """Pull a field on the cell back to the reference tetrahedron."""
        gm = self.map

        def value(ref_points):
            jac = gm.jacobian(ref_points)
            vals = field.value(gm.map(ref_points))
            return np.einsum('qcd,qc->qd', jac, vals)

        def curl(ref_points):
            jac = gm.jacobian(ref_points)
            curls = field.curl(gm.map(ref_points))
            return np.einsum('qcd,qd->qc', cofactor3(jac), curls)

        return Field(value=value, curl=curl)

    def inverse(self, ref_field):
        """Push a reference field forward onto the cell (physical coordinates)."""
        gm = self.map

        def _refs(points):
            return np.array([gm.find_reference(x) for x in np.atleast_2d(points)])

        def value(points):
            ref = _refs(points)
            jac = gm.jacobian(ref)
            det = det3(jac)
            if np.any(np.abs(det) < 1e-14):
                raise ValueError("singular Jacobian in pull-back inversion")
            jinv = inv3(jac, det)
            return np.einsum('qdc,qd->qc', jinv, ref_field.value(ref))

        def curl(points):
            ref = _refs(points)
            jac = gm.jacobian(ref)
            det = det3(jac)
            if np.any(np.abs(det) < 1e-14):
                raise ValueError("singular Jacobian in pull-back inversion")
            return np.einsum('qcd,qd->qc', jac, ref_field.curl(ref)) / det[:, None]

        return Field(value=value, curl=curl)


def pullback_field(pullback, field):
    """Reference-domain image of a field on the pull-back's cell."""
    return pullback.forward(field)


# ---------------------------------------------------------------------------
# boundary surface sampling


def _face_patches(mesh):
    """Node coordinates of each boundary face, (F, 3, 3) or (F, 6, 3)."""
    tris = mesh.faces[mesh.boundary_faces]
    corners = mesh.vertices[tris]
    if mesh.order == 1:
        return corners
    edge_key = {tuple(e): i for i, e in enumerate(mesh.edges)}
    mids = np.empty((len(tris), 3), dtype=np.int64)
    for i, (a, b, c) in enumerate(tris):
        mids[i] = [edge_key[(a, b)], edge_key[(a, c)], edge_key[(b, c)]]
    midcoords = mesh.vertices[mesh.edge_midnodes[mids]]
    return np.concatenate([corners, midcoords], axis=1)


def _patch_shapes(bary, order):
    """Triangle shape values at (n, 2) barycentric points (beta, gamma)."""
    beta, gamma = bary[:, 0], bary[:, 1]
    lam = np.stack([1.0 - beta - gamma, beta, gamma], axis=1)
    if order == 1:
        return lam
    quad = lam * (2.0 * lam - 1.0)
    prods = np.stack([4 * lam[:, 0] * lam[:, 1],
                      4 * lam[:, 0] * lam[:, 2],
                      4 * lam[:, 1] * lam[:, 2]], axis=1)
    return np.hstack([quad, prods])


def _patch_shape_grads(bary, order):
    beta, gamma = bary[:, 0], bary[:, 1]
    lam = np.stack([1.0 - beta - gamma, beta, gamma], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        return np.broadcast_to(dlam, (len(bary), 3, 2)).copy()
    out = np.empty((len(bary), 6, 2))
    out[:, :3, :] = (4.0 * lam - 1.0)[:, :, None] * dlam[None, :, :]
    pairs = ((0, 1), (0, 2), (1, 2))
    for k, (a, b) in enumerate(pairs):
        out[:, 3 + k, :] = 4.0 * (lam[:, a, None] * dlam[b] + lam[:, b, None] * dlam[a])
    return out


def _bary_lattice(n):
    pts = [(i / n, j / n) for i in range(n + 1) for j in range(n + 1 - i)]
    return np.array(pts)


def boundary_surface_samples(mesh, lattice=_BOUNDARY_LATTICE):
    """Deterministic dense point set on the mesh boundary surface."""
    patches = _face_patches(mesh)
    shapes = _patch_shapes(_bary_lattice(lattice), mesh.order)
    return np.einsum('fnc,qn->fqc', patches, shapes).reshape(-1, 3)


def hausdorff_estimate(mesh):
    """Radial gap between the meshed boundary and the unit sphere.

    For meshes contained in the ball this is the Hausdorff distance of the
    complement sets; the absolute value also covers curved patches that
    overshoot the sphere by their interpolation error.
    """
    pts = boundary_surface_samples(mesh)
    return float(np.abs(1.0 - np.linalg.norm(pts, axis=1)).max())


# ---------------------------------------------------------------------------
# radial domain map


@dataclass(frozen=True)
class DiscrepancyReport:
    d0: float
    d1: float
    theta: float   # sampled bound on |dT|, |dT^-1|, |det| and their inverses


class DomainMap:
    """Radial blend T: D_h -> D for a star-shaped ball mesh.

    Along each ray from the origin with exit radius b through the meshed
    boundary, the interval [rho0*b, b] is stretched affinely onto
    [rho0*b, 1]; the core is fixed pointwise and [b, R] maps onto [1, R]
    inside the hold-all ball of radius R.  Jacobians are analytic inside a
    straight face's ray cone and central finite differences (step 1e-6 * h)
    on curved meshes.
    """

    def __init__(self, mesh, rho0=0.5, hold_all_radius=1.25, candidates=12):
        assert_star_shaped(mesh)
        self.mesh = mesh
        self.rho0 = float(rho0)
        self.radius = float(hold_all_radius)
        self.patches = _face_patches(mesh)
        centroids = self.patches[:, :3, :].mean(axis=1)
        self._tree = cKDTree(centroids / np.linalg.norm(centroids, axis=1)[:, None])
        self._k = min(candidates, len(self.patches))
        self._fd_step = _FD_SCALE * mesh.h
        surface = boundary_surface_samples(mesh)
        self._min_exit = float(np.linalg.norm(surface, axis=1).min())
        self._report = None

    # -- ray/boundary intersection --------------------------------------------

    def _straight_hit(self, dirs, patch_idx):
        """Cramer solve of ray-triangle intersections for candidate patches."""
        v0 = self.patches[patch_idx, 0]
        d1 = self.patches[patch_idx, 1] - v0
        d2 = self.patches[patch_idx, 2] - v0
        a = np.stack([d1, d2, -np.broadcast_to(dirs[:, None, :], d1.shape)], axis=-1)
        det = det3(a)
        adj = cofactor3(a)
        ok = np.abs(det) > 1e-14
        safe = np.where(ok, det, 1.0)
        sol = np.einsum('nkij,nkj->nki', adj, -v0) / safe[..., None]
        sol[~ok] = -1.0
        return sol  # (n, k, 3) = (beta, gamma, t)

    def _curved_refine(self, dirs, patch_idx, bary, t):
        nodes = self.patches[patch_idx]
        state = np.column_stack([bary, t])
        for _ in range(8):
            shp = _patch_shapes(state[:, :2], 2)
            grd = _patch_shape_grads(state[:, :2], 2)
            pos = np.einsum('nmc,nm->nc', nodes, shp)
            residual = pos - state[:, 2:3] * dirs
            jac = np.empty((len(dirs), 3, 3))
            jac[:, :, :2] = np.einsum('nmc,nmd->ncd', nodes, grd)
            jac[:, :, 2] = -dirs
            upd = np.einsum('ncd,nd->nc', inv3(jac), residual)
            state = state - upd
            if np.abs(residual).max() < 1e-13:
                break
        return state[:, :2], state[:, 2]

    def exit_radius(self, dirs, tol=1e-9):
        """Boundary exit radius b along each unit direction, with hit data."""
        dirs = np.atleast_2d(dirs)
        chunk = 1 << 15
        if len(dirs) > chunk:
            parts = [self.exit_radius(dirs[i:i + chunk], tol=tol)
                     for i in range(0, len(dirs), chunk)]
            return (np.concatenate([p[0] for p in parts]),
                    np.concatenate([p[1] for p in parts]),
                    np.vstack([p[2] for p in parts]))
        _, idx = self._tree.query(dirs, k=self._k)
        idx = idx.reshape(len(dirs), -1)
        sol = self._straight_hit(dirs, idx)
        beta, gamma, t = sol[..., 0], sol[..., 1], sol[..., 2]
        valid = (beta >= -tol) & (gamma >= -tol) & (beta + gamma <= 1 + tol) & (t > tol)
        if not valid.any(axis=1).all():
            missing = ~valid.any(axis=1)
            allidx = np.broadcast_to(np.arange(len(self.patches)),
                                     (missing.sum(), len(self.patches)))
            sol_all = self._straight_hit(dirs[missing], allidx)
            b2, g2, t2 = sol_all[..., 0], sol_all[..., 1], sol_all[..., 2]
            v2 = (b2 >= -tol) & (g2 >= -tol) & (b2 + g2 <= 1 + tol) & (t2 > tol)
            if not v2.any(axis=1).all():
                raise ValueError("ray-boundary intersection failed; "
                                 "mesh is not star-shaped around the origin")
            pick2 = v2.argmax(axis=1)
            rows2 = np.arange(len(pick2))
            miss_rows = np.nonzero(missing)[0]
            idx[miss_rows, 0] = allidx[rows2, pick2]
            beta[miss_rows, 0] = b2[rows2, pick2]
            gamma[miss_rows, 0] = g2[rows2, pick2]
            t[miss_rows, 0] = t2[rows2, pick2]
            valid[miss_rows, 0] = True
        pick = valid.argmax(axis=1)
        rows = np.arange(len(dirs))
        faces = idx[rows, pick]
        bary = np.column_stack([beta[rows, pick], gamma[rows, pick]])
        tval = t[rows, pick]
        if self.mesh.order == 2:
            bary, tval = self._curved_refine(dirs, faces, bary, tval)
        return tval, faces, bary

    # -- the map and its inverse ----------------------------------------------

    def _split(self, points):
        points = np.atleast_2d(points).astype(float)
        r = np.linalg.norm(points, axis=1)
        if (r > self.radius * (1 + 1e-9)).any():
            raise ValueError("point outside the hold-all ball")
        core = r <= self.rho0 * self._min_exit
        u = np.where(r[:, None] > 1e-300, points / np.maximum(r, 1e-300)[:, None], 0.0)
        return points, r, u, core

    def forward(self, points):
        points, r, u, core = self._split(points)
        out = points.copy()
        act = ~core
        if act.any():
            b, _, _ = self.exit_radius(u[act])
            a = self.rho0 * b
            ra = r[act]
            g = np.where(
                ra <= a, ra,
                np.where(ra <= b,
                         a + (ra - a) * (1.0 - a) / (b - a),
                         1.0 + (ra - b) * (self.radius - 1.0) / (self.radius - b)))
            out[act] = g[:, None] * u[act]
        return out

    def inverse(self, points):
        points, rho, u, core = self._split(points)
        out = points.copy()
        act = ~core
        if act.any():
            b, _, _ = self.exit_radius(u[act])
            a = self.rho0 * b
            ra = rho[act]
            g = np.where(
                ra <= a, ra,
                np.where(ra <= 1.0,
                         a + (ra - a) * (b - a) / (1.0 - a),
                         b + (ra - 1.0) * (self.radius - b) / (self.radius - 1.0)))
            out[act] = g[:, None] * u[act]
        return out

    # -- Jacobians -------------------------------------------------------------

    def _jacobian_fd(self, points, func):
        points = np.atleast_2d(points)
        h = self._fd_step
        jac = np.empty((len(points), 3, 3))
        for j in range(3):
            step = np.zeros(3)
            step[j] = h
            jac[:, :, j] = (func(points + step) - func(points - step)) / (2 * h)
        return jac

    def _ray_gradients(self, u, r):
        """Exit radius b and its spatial gradient for straight boundary faces."""
        b, faces, _ = self.exit_radius(u)
        v0 = self.patches[faces, 0]
        n = np.cross(self.patches[faces, 1] - v0, self.patches[faces, 2] - v0)
        c = np.einsum('nc,nc->n', n, v0)
        w = np.einsum('nc,nc->n', n, u)
        proj = np.eye(3)[None] - u[:, :, None] * u[:, None, :]
        grad_b = -(c / (w ** 2 * r))[:, None] * np.einsum('ncd,nd->nc', proj, n)
        return b, grad_b, proj

    def _jacobian_analytic(self, points, inverse=False):
        points, r, u, core = self._split(points)
        jac = np.broadcast_to(np.eye(3), (len(points), 3, 3)).copy()
        act = ~core
        if not act.any():
            return jac
        ua, ra = u[act], r[act]
        b, grad_b, proj = self._ray_gradients(ua, ra)
        a = self.rho0 * b
        grad_a = self.rho0 * grad_b
        R = self.radius
        if not inverse:
            mid = (ra > a) & (ra <= b)
            s = (1.0 - a) / (b - a)
            ds = ((1.0 - b) / (b - a) ** 2)[:, None] * grad_a \
                - ((1.0 - a) / (b - a) ** 2)[:, None] * grad_b
            g_mid = a + (ra - a) * s
            grad_mid = (1.0 - s)[:, None] * grad_a + s[:, None] * ua \
                + (ra - a)[:, None] * ds
            sigma = (R - 1.0) / (R - b)
            dsigma = ((R - 1.0) / (R - b) ** 2)[:, None] * grad_b
            g_out = 1.0 + (ra - b) * sigma
            grad_out = (-sigma)[:, None] * grad_b + (ra - b)[:, None] * dsigma \
                + sigma[:, None] * ua
        else:
            mid = (ra > a) & (ra <= 1.0)
            q = (b - a) / (1.0 - a)
            dq = ((b - 1.0) / (1.0 - a) ** 2)[:, None] * grad_a \
                + (1.0 / (1.0 - a))[:, None] * grad_b
            g_mid = a + (ra - a) * q
            grad_mid = (1.0 - q)[:, None] * grad_a + q[:, None] * ua \
                + (ra - a)[:, None] * dq
            sigma = (R - b) / (R - 1.0)
            g_out = b + (ra - 1.0) * sigma
            grad_out = (1.0 - (ra - 1.0) / (R - 1.0))[:, None] * grad_b \
                + sigma[:, None] * ua
        inner = ra <= a
        g = np.where(inner, ra, np.where(mid, g_mid, g_out))
        grad_g = np.where(inner[:, None], ua,
                          np.where(mid[:, None], grad_mid, grad_out))
        jac[act] = ua[:, :, None] * grad_g[:, None, :] \
            + (g / ra)[:, None, None] * proj
        return jac

    def jacobian(self, points):
        """dT at physical points; analytic for straight meshes, FD for curved."""
        if self.mesh.order == 1:
            return self._jacobian_analytic(points)
        return self._jacobian_fd(points, self.forward)

    def inverse_jacobian(self, points):
        """d(T^-1) at points of the image domain."""
        if self.mesh.order == 1:
            return self._jacobian_analytic(points, inverse=True)
        return self._jacobian_fd(points, self.inverse)

    # -- discrepancy metrics ----------------------------------------------------

    def _sample_points(self):
        interior = self.mesh.map_points(quadrature(3).points).reshape(-1, 3)
        surface = boundary_surface_samples(self.mesh)
        sr = np.linalg.norm(surface, axis=1)
        dirs = surface / sr[:, None]
        b, _, _ = self.exit_radius(dirs)
        a = self.rho0 * b
        shell = [dirs * (a + f * (b - a))[:, None] for f in _SHELL_FACTORS]
        shell.append(dirs * (b + 0.5 * (self.radius - b))[:, None])
        image_shell = [dirs * (a + f * (1.0 - a))[:, None] for f in _SHELL_FACTORS]
        image_shell.append(dirs * (1.0 + 0.5 * (self.radius - 1.0)))
        return interior, surface, dirs, np.vstack(shell), np.vstack(image_shell)

    def discrepancies(self):
        """Sampled sup-norm distances of T and T^-1 from the identity."""
        if self._report is not None:
            return self._report
        interior, surface, dirs, shell, image_shell = self._sample_points()
        fwd_pts = np.vstack([interior, surface, shell])
        inv_pts = np.vstack([interior, dirs, image_shell])
        d0 = (np.linalg.norm(self.forward(fwd_pts) - fwd_pts, axis=1).max()
              + np.linalg.norm(self.inverse(inv_pts) - inv_pts, axis=1).max())
        jac_pts = np.vstack([interior, shell])
        ijac_pts = np.vstack([interior, image_shell])
        jac = self.jacobian(jac_pts)
        ijac = self.inverse_jacobian(ijac_pts)
        eye = np.eye(3)
        d1 = (d0 + np.linalg.norm(jac - eye, axis=(1, 2)).max()
              + np.linalg.norm(ijac - eye, axis=(1, 2)).max())
        dets = np.concatenate([det3(jac), det3(ijac)])
        norms = np.concatenate([
            np.linalg.norm(jac, axis=(1, 2)), np.linalg.norm(ijac, axis=(1, 2))])
        theta = max(norms.max(), np.sqrt(3.0) / norms.min(),
                    dets.max(), 1.0 / dets.min())
        self._report = DiscrepancyReport(d0=float(d0), d1=float(d1), theta=float(theta))
        return self._report


def radial_domain_map(mesh, rho0=0.5, hold_all_radius=1.25):
    """Star-shaped radial blend from the meshed ball onto the unit ball."""
    return DomainMap(mesh, rho0=rho0, hold_all_radius=hold_all_radius)


def pullback_solution(domain_map, field):
    """Transport a field on the ball to the meshed domain: dT^T (U o T)."""

    def value(points):
        jac = domain_map.jacobian(points)
        vals = field.value(domain_map.forward(points))
        return np.einsum('ncd,nc->nd', jac, vals)

    def curl(points):
        jac = domain_map.jacobian(points)
        curls = field.curl(domain_map.forward(points))
        return np.einsum('ncd,nd->nc', cofactor3(jac), curls)

    return Field(value=value, curl=curl)


def inverse_pullback_solution(domain_map, field):
    """Transport a field on the meshed domain back to the ball."""

    def value(points):
        jac = domain_map.inverse_jacobian(points)
        vals = field.value(domain_map.inverse(points))
        return np.einsum('ncd,nc->nd', jac, vals)

    def curl(points):
        jac = domain_map.inverse_jacobian(points)
        curls = field.curl(domain_map.inverse(points))
        return np.einsum('ncd,nd->nc', cofactor3(jac), curls)

    return Field(value=value, curl=curl)
