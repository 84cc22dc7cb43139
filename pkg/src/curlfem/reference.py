"""Reference tetrahedron: curl-conforming bases, nodal geometry shapes, quadrature.

Entity enumeration on the reference tetrahedron (vertices 0, e1, e2, e3) is
fixed and shared by the whole package:

* edges:  (0,1), (0,2), (0,3), (1,2), (1,3), (2,3)
* faces:  (1,2,3), (0,2,3), (0,1,3), (0,1,2)   -- face i opposite vertex i

Edge degrees of freedom are tangential moments against Legendre weights in
the edge parameter; face degrees of freedom (degree 2 only) are moments
against the sum and difference of the two face tangents spanned from the
first face vertex.  The symmetric/antisymmetric face pair is chosen so that
swapping the last two face vertices flips only the sign of the second
functional, which keeps all mesh orientation corrections diagonal.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

_VERTS = np.array([[0.0, 0.0, 0.0],
                   [1.0, 0.0, 0.0],
                   [0.0, 1.0, 0.0],
                   [0.0, 0.0, 1.0]])

MAX_QUADRATURE_EXACTNESS = 21


class ReferenceTet:
    """The unit tetrahedron with its fixed edge and face enumeration."""

    vertices = _VERTS
    edges = EDGES
    faces = FACES
    volume = 1.0 / 6.0

    @staticmethod
    def contains(points, tol=1e-12):
        """Vectorized membership test for reference points (N, 3)."""
        p = np.atleast_2d(points)
        inside = (p >= -tol).all(axis=1) & (p.sum(axis=1) <= 1.0 + tol)
        return inside if points.ndim > 1 else bool(inside[0])


def simplex_moment(alpha):
    """Exact integral of x^a y^b z^c (or x^a y^b in 2D) over the unit simplex."""
    alpha = tuple(int(a) for a in alpha)
    num = 1
    for a in alpha:
        num *= factorial(a)
    return num / factorial(sum(alpha) + len(alpha))


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the unit simplex with a certified exactness."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        """Contract sampled integrand values (..., npoints) with the weights."""
        return np.asarray(values) @ self.weights


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _grundmann_moller(dim, index):
    """Simplex rule of degree 2*index+1, weights computed in exact rationals."""
    s, n = index, dim
    d = 2 * s + 1
    point_weights = {}
    for i in range(s + 1):
        w = (Fraction((-1) ** i) * Fraction(d + n - 2 * i) ** d
             / (Fraction(4) ** s * factorial(i) * factorial(d + n - i)))
        denom = d + n - 2 * i
        for beta in _compositions(s - i, n + 1):
            pt = tuple(Fraction(2 * b + 1, denom) for b in beta[1:])
            point_weights[pt] = point_weights.get(pt, Fraction(0)) + w
    points = np.array([[float(c) for c in p] for p in point_weights])
    weights = np.array([float(w) for w in point_weights.values()])
    return points, weights, d


def _certify(rule, dim):
    worst = 0.0
    for alpha in _compositions(rule.exactness, dim + 1):
        alpha = alpha[:dim]
        if sum(alpha) > rule.exactness:
            continue
        vals = np.prod(rule.points ** np.array(alpha, dtype=float), axis=1)
        approx = rule.integrate(vals)
        exact = simplex_moment(alpha)
        worst = max(worst, abs(approx - exact) / abs(exact))
    return worst


def _build_rule(dim, requested_exactness):
    if requested_exactness < 0:
        raise ValueError("requested exactness must be >= 0")
    if requested_exactness > MAX_QUADRATURE_EXACTNESS:
        raise ValueError(
            f"requested exactness {requested_exactness} exceeds generator "
            f"maximum {MAX_QUADRATURE_EXACTNESS}")
    index = requested_exactness // 2  # smallest s with 2s+1 >= requested
    points, weights, degree = _grundmann_moller(dim, index)
    rule = QuadratureRule(points=points, weights=weights, exactness=degree)
    err = _certify(rule, dim)
    if err > 1e-12:
        raise RuntimeError(
            f"quadrature certification failed for dim={dim} degree={degree}: "
            f"worst relative monomial error {err:.3e}")
    return rule


@lru_cache(maxsize=None)
def quadrature(requested_exactness):
    """Certified rule on the reference tetrahedron, exact to at least the request."""
    return _build_rule(3, requested_exactness)


@lru_cache(maxsize=None)
def triangle_quadrature(requested_exactness):
    """Certified rule on the unit triangle (used for face moments)."""
    return _build_rule(2, requested_exactness)


@lru_cache(maxsize=None)
def gauss_01(n):
    """n-point Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# geometric (Lagrange) shape functions


class GeometricShapeSet:
    """Nodal shapes of order 1 (4 vertex nodes) or 2 (plus 6 edge midpoints)."""

    def __init__(self, order):
        if order not in (1, 2):
            raise ValueError(f"geometric order {order} unsupported (use 1 or 2)")
        self.order = order
        if order == 1:
            self.nodes = _VERTS.copy()
        else:
            mids = np.array([0.5 * (_VERTS[a] + _VERTS[b]) for a, b in EDGES])
            self.nodes = np.vstack([_VERTS, mids])

    @property
    def node_count(self):
        return len(self.nodes)

    def values(self, points):
        """Shape values, shape (npoints, nnodes)."""
        p = np.atleast_2d(points)
        lam = np.empty((len(p), 4))
        lam[:, 0] = 1.0 - p.sum(axis=1)
        lam[:, 1:] = p
        if self.order == 1:
            return lam
        out = np.empty((len(p), 10))
        out[:, :4] = lam * (2.0 * lam - 1.0)
        for k, (a, b) in enumerate(EDGES):
            out[:, 4 + k] = 4.0 * lam[:, a] * lam[:, b]
        return out

    def gradients(self, points):
        """Shape gradients, shape (npoints, nnodes, 3)."""
        p = np.atleast_2d(points)
        dlam = np.array([[-1.0, -1.0, -1.0],
                         [1.0, 0.0, 0.0],
                         [0.0, 1.0, 0.0],
                         [0.0, 0.0, 1.0]])
        if self.order == 1:
            return np.broadcast_to(dlam, (len(p), 4, 3)).copy()
        lam = np.empty((len(p), 4))
        lam[:, 0] = 1.0 - p.sum(axis=1)
        lam[:, 1:] = p
        out = np.empty((len(p), 10, 3))
        out[:, :4, :] = (4.0 * lam - 1.0)[:, :, None] * dlam[None, :, :]
        for k, (a, b) in enumerate(EDGES):
            out[:, 4 + k, :] = 4.0 * (lam[:, a, None] * dlam[b] + lam[:, b, None] * dlam[a])
        return out


@lru_cache(maxsize=None)
def geometric_shapes(order):
    return GeometricShapeSet(order)


# ---------------------------------------------------------------------------
# curl-conforming basis


def _monomial_exponents(max_degree):
    exps = []
    for total in range(max_degree + 1):
        for a in range(total, -1, -1):
            for b in range(total - a, -1, -1):
                exps.append((a, b, total - a - b))
    return np.array(exps, dtype=int)


def _eval_monomials(exps, points):
    """(npoints, nmono) monomial values; 0**0 treated as 1."""
    p = np.atleast_2d(points).astype(float)
    return np.prod(p[:, None, :] ** exps[None, :, :], axis=2)


def _derivative_matrix(exps, axis):
    """D such that (D @ c) are the coefficients of d/dx_axis of c."""
    index = {tuple(e): m for m, e in enumerate(exps)}
    nm = len(exps)
    d = np.zeros((nm, nm))
    for m, e in enumerate(exps):
        if e[axis] == 0:
            continue
        lower = list(e)
        lower[axis] -= 1
        d[index[tuple(lower)], m] = e[axis]
    return d


@dataclass(frozen=True)
class DofDescriptor:
    """Identifies a reference degree of freedom by supporting entity."""

    kind: str        # "edge" or "face"
    entity: int      # index into EDGES / FACES
    moment: int      # Legendre order on edges; 0 = sym, 1 = asym on faces


class NedelecBasis:
    """First-kind curl-conforming element of degree k on the reference tet.

    The polynomial space is P_{k-1}^3 plus the homogeneous degree-k fields p
    with x . p(x) = 0; basis members are stored as monomial coefficient
    tensors and are dual to the edge/face moment functionals described in the
    module docstring.
    """

    def __init__(self, degree):
        if degree not in (1, 2):
            raise ValueError(f"degree {degree} unsupported (use 1 or 2)")
        self.degree = degree
        self.dim = degree * (degree + 2) * (degree + 3) // 2
        self.exps = _monomial_exponents(degree)
        span = self._span_coefficients(degree)
        self.dofs = self._dof_descriptors(degree)
        assert len(self.dofs) == self.dim
        self._setup_dof_data(degree)
        vandermonde = np.array([self._apply_dofs_to_coef(c) for c in span]).T
        # rows: dofs, columns: span members -> dual basis by linear solve
        coef = np.linalg.solve(vandermonde, np.eye(self.dim))
        self.coef = np.einsum('js,scm->jcm', coef.T, np.array(span))
        curl = np.empty_like(self.coef)
        dx = [_derivative_matrix(self.exps, i) for i in range(3)]
        for j in range(self.dim):
            curl[j, 0] = dx[1] @ self.coef[j, 2] - dx[2] @ self.coef[j, 1]
            curl[j, 1] = dx[2] @ self.coef[j, 0] - dx[0] @ self.coef[j, 2]
            curl[j, 2] = dx[0] @ self.coef[j, 1] - dx[1] @ self.coef[j, 0]
        self.curl_coef = curl
        check = np.array([self._apply_dofs_to_coef(c) for c in self.coef]).T
        if np.abs(check - np.eye(self.dim)).max() > 1e-10:
            raise RuntimeError("basis construction failed the duality check")

    # -- construction helpers ------------------------------------------------

    def _span_coefficients(self, k):
        exps = self.exps
        index = {tuple(e): m for m, e in enumerate(exps)}
        nm = len(exps)
        span = []
        for e in _monomial_exponents(k - 1):
            for comp in range(3):
                c = np.zeros((3, nm))
                c[comp, index[tuple(e)]] = 1.0
                span.append(c)
        # homogeneous degree-k candidates x cross (x^beta e_j)
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[1, 0, 2] = eps[2, 1, 0] = -1.0
        candidates = []
        for beta in _monomial_exponents(k - 1):
            if beta.sum() != k - 1:
                continue
            for j in range(3):
                c = np.zeros((3, nm))
                for ell in range(3):
                    if eps[:, ell, j].any():
                        shifted = list(beta)
                        shifted[ell] += 1
                        m = index[tuple(shifted)]
                        for i in range(3):
                            if eps[i, ell, j]:
                                c[i, m] += eps[i, ell, j]
                candidates.append(c)
        # greedy deterministic rank selection among the cross-product fields
        flat = [c.ravel() for c in span]
        rank = np.linalg.matrix_rank(np.array(flat))
        for c in candidates:
            trial = np.array(flat + [c.ravel()])
            r = np.linalg.matrix_rank(trial)
            if r > rank:
                span.append(c)
                flat.append(c.ravel())
                rank = r
        if rank != self.dim:
            raise RuntimeError("span construction produced the wrong dimension")
        return span

    @staticmethod
    def _dof_descriptors(k):
        dofs = [DofDescriptor("edge", e, j) for e in range(6) for j in range(k)]
        if k == 2:
            dofs += [DofDescriptor("face", f, m) for f in range(4) for m in range(2)]
        return dofs

    def _setup_dof_data(self, k):
        t, w = gauss_01(6)
        self._edge_t, self._edge_w = t, w
        self._edge_points = np.array(
            [_VERTS[a] + np.outer(t, _VERTS[b] - _VERTS[a]) for a, b in EDGES])
        self._edge_dirs = np.array([_VERTS[b] - _VERTS[a] for a, b in EDGES])
        self._legendre = np.array([np.ones_like(t), 2.0 * t - 1.0])
        if k == 2:
            tri = triangle_quadrature(7)
            self._face_w = tri.weights
            pts, dirs = [], []
            for a, b, c in FACES:
                xi, eta = tri.points[:, 0], tri.points[:, 1]
                d1, d2 = _VERTS[b] - _VERTS[a], _VERTS[c] - _VERTS[a]
                pts.append(_VERTS[a] + np.outer(xi, d1) + np.outer(eta, d2))
                dirs.append((d1 + d2, d1 - d2))
            self._face_points = np.array(pts)
            self._face_dirs = np.array(dirs)

    def _apply_dofs_to_coef(self, coef):
        def field(points):
            mono = _eval_monomials(self.exps, points)
            return mono @ coef.T
        return self.apply_dofs(field)

    # -- public surface ------------------------------------------------------

    def apply_dofs(self, field):
        """Evaluate every degree of freedom on a callable (N,3)->(N,3) field."""
        out = np.empty(self.dim, dtype=np.result_type(field(_VERTS[:1]).dtype, float))
        i = 0
        for e in range(6):
            vals = field(self._edge_points[e]) @ self._edge_dirs[e]
            for j in range(self.degree):
                out[i] = np.sum(self._edge_w * self._legendre[j] * vals)
                i += 1
        if self.degree == 2:
            for f in range(4):
                vals = field(self._face_points[f])
                for m in range(2):
                    out[i] = np.sum(self._face_w * (vals @ self._face_dirs[f, m]))
                    i += 1
        return out

    def eval_values(self, points):
        """Basis values at reference points, shape (dim, npoints, 3)."""
        mono = _eval_monomials(self.exps, points)
        return np.einsum('jcm,nm->jnc', self.coef, mono)

    def eval_curls(self, points):
        """Basis curls at reference points, shape (dim, npoints, 3)."""
        mono = _eval_monomials(self.exps, points)
        return np.einsum('jcm,nm->jnc', self.curl_coef, mono)


@lru_cache(maxsize=None)
def nedelec_space(k):
    """Curl-conforming basis of degree k in {1, 2}."""
    if not isinstance(k, (int, np.integer)) or k < 1 or k > 2:
        raise ValueError(f"degree {k} unsupported (use 1 or 2)")
    return NedelecBasis(int(k))


def eval_basis(basis, point):
    """Values and curls of all basis functions at one reference point.

    Raises for points outside the closed reference tetrahedron; mapping bugs
    elsewhere in the stack tend to surface here first.
    """
    point = np.asarray(point, dtype=float)
    if not ReferenceTet.contains(point, tol=1e-10):
        raise ValueError(f"point {point} lies outside the reference tetrahedron")
    pts = point[None, :]
    return basis.eval_values(pts)[:, 0, :], basis.eval_curls(pts)[:, 0, :]
