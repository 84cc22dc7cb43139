"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The studies reuse cached level runs.  Two criteria state targets that the
verified mathematics contradicts and fail by design (see README): the
manufactured-identity sign in criterion 5, and the curved-mesh d0 band in
criterion 11, where quadratic interpolation of a sphere superconverges.
"""
import time
from functools import lru_cache

import numpy as np
import pytest

from curlfem.analysis import eoc, error_norms
from curlfem.assembly import apply_pec, assemble, build_dof_map
from curlfem.interpolation import FemFunction, global_interpolate
from curlfem.mesh import Mesh, MeshError, generate_ball_mesh, generate_cube_mesh
from curlfem.presets import ball_cavity, cube_cavity
from curlfem.reference import (nedelec_space, quadrature, simplex_moment,
                               triangle_quadrature)
from curlfem.smallmat import cofactor3
from curlfem.solver import solve
from curlfem.transforms import (ElementPullback, Field, hausdorff_estimate,
                                radial_domain_map)
from curlfem.mesh import element_map

from conftest import ACCEPTANCE_LINES

BALL = ball_cavity()
CUBE = cube_cavity()


def record(criterion, passed, detail):
    ACCEPTANCE_LINES.append(
        f"criterion {criterion:>3}: {'PASS' if passed else 'FAIL'}  {detail}")
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}",
          flush=True)
    return passed


@lru_cache(maxsize=None)
def ball_solution_rows(k, geo, levels):
    rows = []
    for level in levels:
        mesh = generate_ball_mesh(level, order=geo)
        system = assemble(mesh, k, BALL.materials)
        reduced = apply_pec(system)
        method = "iterative" if reduced.matrix.shape[0] > 8000 else "direct"
        x, _ = solve(reduced, tol=1e-10, method=method)
        fem = FemFunction(mesh, k, reduced.embed(x), dof_map=system.dof_map)
        rows.append((mesh.h, error_norms(mesh, fem, BALL.exact)[1]))
    return tuple(rows)


@lru_cache(maxsize=None)
def cube_solution_rows(k, levels):
    rows = []
    for level in levels:
        mesh = generate_cube_mesh(level)
        system = assemble(mesh, k, CUBE.materials)
        reduced = apply_pec(system)
        method = "iterative" if reduced.matrix.shape[0] > 8000 else "direct"
        x, _ = solve(reduced, tol=1e-10, method=method)
        fem = FemFunction(mesh, k, reduced.embed(x), dof_map=system.dof_map)
        rows.append((mesh.h, error_norms(mesh, fem, CUBE.exact)[1]))
    return tuple(rows)


@lru_cache(maxsize=None)
def domain_metric_rows(geo, levels):
    rows = []
    for level in levels:
        mesh = generate_ball_mesh(level, order=geo)
        report = radial_domain_map(mesh).discrepancies()
        rows.append((mesh.h, report.d0, report.d1, hausdorff_estimate(mesh)))
    return tuple(rows)


# -- criteria 1-3: ball convergence ----------------------------------------------


def test_criterion_01_ball_k1_linear_rate():
    slopes = {}
    for geo in (1, 2):
        rows = ball_solution_rows(1, geo, (2, 3, 4))
        slopes[geo] = eoc(rows[-3:])
    ok = all(abs(s - 1.0) <= 0.2 for s in slopes.values())
    record(1, ok, f"k=1 H(curl) EOC straight={slopes[1]:.3f} "
                  f"curved={slopes[2]:.3f} (target 1.0 +- 0.2)")
    assert ok


def test_criterion_02_ball_k2_curved_rate():
    slope = eoc(ball_solution_rows(2, 2, (1, 2, 3))[-3:])
    ok = abs(slope - 2.0) <= 0.3
    record(2, ok, f"k=2 curved H(curl) EOC={slope:.3f} (target 2.0 +- 0.3)")
    assert ok


def test_criterion_03_ball_k2_straight_degraded_rate():
    slope = eoc(ball_solution_rows(2, 1, (1, 2, 3))[-3:])
    ok = abs(slope - 1.5) <= 0.3
    record(3, ok, f"k=2 straight H(curl) EOC={slope:.3f} (target 1.5 +- 0.3)")
    assert ok


# -- criterion 4: cube control ----------------------------------------------------


def test_criterion_04_cube_control_rates():
    slopes = {k: eoc(cube_solution_rows(k, (1, 2, 3))[-3:]) for k in (1, 2)}
    ok = all(abs(slopes[k] - k) <= 0.2 for k in (1, 2))
    record(4, ok, f"cube EOC k=1: {slopes[1]:.3f}, k=2: {slopes[2]:.3f} "
                  f"(targets k +- 0.2)")
    assert ok


# -- criteria 5-6: manufactured solution ------------------------------------------


def _fd_curl(field, points, step):
    out = np.empty((len(points), 3))
    # 4th-order central differences of each partial derivative
    coeff = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    partial = np.empty((3, len(points), 3))
    for j in range(3):
        acc = np.zeros((len(points), 3))
        for c, o in zip(coeff, offsets):
            shifted = points.copy()
            shifted[:, j] += o * step
            acc += c * field(shifted)
        partial[j] = acc / step
    return np.stack([partial[1][:, 2] - partial[2][:, 1],
                     partial[2][:, 0] - partial[0][:, 2],
                     partial[0][:, 1] - partial[1][:, 0]], axis=1)


def _residuals():
    rng = np.random.default_rng(2024)
    pts = rng.standard_normal((100, 3))
    pts = 0.9 * pts / np.linalg.norm(pts, axis=1)[:, None] \
        * rng.random((100, 1)) ** (1 / 3)
    step = 5e-3
    curlcurl = _fd_curl(lambda p: _fd_curl(BALL.exact.value, p, step), pts, step)
    e_val = BALL.exact.value(pts)
    j_real = BALL.materials.current(pts).imag
    as_specified = 0.5 * curlcurl - e_val - j_real
    consistent = 0.5 * curlcurl + e_val - j_real
    return (np.linalg.norm(as_specified, axis=1).max(),
            np.linalg.norm(consistent, axis=1).max())


def test_criterion_05_manufactured_residual_as_specified():
    stated_resid, _ = _residuals()
    ok = stated_resid <= 1e-6
    record(5, ok, f"|(1/2)curlcurlE - E - J| = {stated_resid:.3e} (target <= 1e-6; "
                  "invalid target: the closed-form pair satisfies the + identity, "
                  "see README)")
    assert ok, (
        f"the stated identity fails with residual {stated_resid:.3e}: the "
        "closed-form (E, J) pair satisfies (1/2)curlcurlE + E = J instead; "
        "see the companion oracle test and the README")


def test_criterion_05_verified_consistency_oracle():
    _, resid = _residuals()
    ok = resid <= 1e-6
    record("5b", ok, f"|(1/2)curlcurlE + E - J| = {resid:.3e} "
                     "(verified manufactured identity)")
    assert ok


def test_criterion_06_pec_compatibility():
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((1000, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    cross = np.cross(pts, BALL.exact.value(pts))
    worst = np.linalg.norm(cross, axis=1).max()
    ok = worst <= 1e-12
    record(6, ok, f"max |n x E| on sphere = {worst:.3e} (target <= 1e-12)")
    assert ok


# -- criterion 7: quadrature certification ----------------------------------------


def test_criterion_07_quadrature_certification():
    start = time.perf_counter()
    worst = 0.0
    for degree in range(0, 14):
        for dim, rule in ((3, quadrature(degree)), (2, triangle_quadrature(degree))):
            exps = _monomials_upto(rule.exactness, dim)
            vals = np.prod(rule.points[None, :, :] ** exps[:, None, :], axis=2)
            approx = vals @ rule.weights
            exact = np.array([simplex_moment(e) for e in exps])
            worst = max(worst, np.abs(approx / exact - 1.0).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    record(7, ok, f"worst monomial relerr = {worst:.2e}, {elapsed * 1e3:.0f} ms "
                  "(targets <= 1e-12, < 1 s)")
    assert ok


def _monomials_upto(degree, dim):
    out = []
    if dim == 3:
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                for c in range(degree + 1 - a - b):
                    out.append((a, b, c))
    else:
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                out.append((a, b))
    return np.array(out)


# -- criterion 8: unisolvence and reproduction -------------------------------------


def test_criterion_08_unisolvence_and_reproduction():
    worst_dual = 0.0
    for k in (1, 2):
        basis = nedelec_space(k)
        dual = np.array([basis._apply_dofs_to_coef(c) for c in basis.coef]).T
        worst_dual = max(worst_dual, np.abs(dual - np.eye(basis.dim)).max())
    mesh = generate_ball_mesh(0, order=2)
    worst_rep = 0.0
    rng = np.random.default_rng(11)
    for k in (1, 2):
        dof_map = build_dof_map(mesh, k)
        coeffs = rng.standard_normal(dof_map.num_dofs)
        fem = FemFunction(mesh, k, coeffs, dof_map=dof_map)
        redone = global_interpolate(mesh, k, _locating_field(mesh, fem))
        worst_rep = max(worst_rep,
                        np.abs(redone.coefficients - coeffs).max())
    ok = worst_dual <= 1e-10 and worst_rep <= 1e-10
    record(8, ok, f"duality dev = {worst_dual:.2e}, reproduction dev = "
                  f"{worst_rep:.2e} (targets <= 1e-10)")
    assert ok


def _locating_field(mesh, fem):
    """Evaluate a FemFunction at arbitrary points by brute-force location."""
    def value(points):
        points = np.atleast_2d(points)
        out = np.zeros((len(points), 3), dtype=complex)
        for i, x in enumerate(points):
            for cell in range(mesh.num_cells):
                gm = element_map(mesh, cell)
                try:
                    ref = gm.find_reference(x)
                except RuntimeError:
                    continue
                if (ref > -1e-8).all() and ref.sum() < 1 + 1e-8:
                    out[i] = fem.cell_values(cell, ref[None, :])[0]
                    break
        return out

    return Field(value=value, curl=None)


# -- criterion 9: pull-back algebra -----------------------------------------------


def test_criterion_09_pullback_algebra():
    rng = np.random.default_rng(3)
    worst = 0.0
    field = Field(
        value=lambda p: np.stack([p[:, 1] * p[:, 2], p[:, 0] ** 2,
                                  p[:, 0] * p[:, 1]], axis=1),
        curl=lambda p: np.stack([p[:, 0], np.zeros(len(p)),
                                 2 * p[:, 0] - p[:, 2]], axis=1))
    pts = rng.dirichlet((1, 1, 1, 1), 40)[:, :3]
    for trial in range(6):
        mesh = _random_cell(rng, curved=trial % 2 == 1)
        gm = element_map(mesh, 0)
        pb = ElementPullback(gm)
        ref = pb.forward(field)
        back = pb.forward(pb.inverse(ref))
        worst = max(worst, np.abs(back.value(pts) - ref.value(pts)).max())
        jac = gm.jacobian(pts)
        expected = np.einsum('qcd,qd->qc', cofactor3(jac),
                             field.curl(gm.map(pts)))
        worst = max(worst, np.abs(ref.curl(pts) - expected).max())
    ok = worst <= 1e-10
    record(9, ok, f"round-trip/cofactor identity dev = {worst:.2e} "
                  "(target <= 1e-10)")
    assert ok


def _random_cell(rng, curved):
    ref = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    while True:
        verts = ref + 0.3 * rng.standard_normal((4, 3))
        try:
            if not curved:
                return Mesh(verts, np.array([[0, 1, 2, 3]]))
            mids = np.array([(verts[a] + verts[b]) / 2 for a, b in
                             ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))])
            mids += 0.04 * rng.standard_normal(mids.shape)
            return Mesh(np.vstack([verts, mids]),
                        np.array([list(range(10))]), order=2)
        except MeshError:
            continue


# -- criterion 10: interpolation rates ---------------------------------------------


def test_criterion_10_interpolation_rates():
    slopes = {}
    for k, geo, levels in ((1, 1, (2, 3, 4)), (2, 2, (1, 2, 3))):
        rows = []
        for level in levels:
            mesh = generate_ball_mesh(level, order=geo)
            fem = global_interpolate(mesh, k, BALL.exact)
            rows.append((mesh.h, error_norms(mesh, fem, BALL.exact)[1]))
        slopes[k] = eoc(rows[-3:])
    ok = all(abs(slopes[k] - k) <= 0.2 for k in (1, 2))
    record(10, ok, f"interpolation EOC k=1: {slopes[1]:.3f}, k=2: {slopes[2]:.3f} "
                   "(targets k +- 0.2)")
    assert ok


# -- criterion 11: domain-map rates ------------------------------------------------


def test_criterion_11_domain_map_rates_straight():
    rows = domain_metric_rows(1, (1, 2, 3))
    d0_slope = eoc([(h, d0) for h, d0, _, _ in rows][-3:])
    haus_slope = eoc([(h, gap) for h, _, _, gap in rows][-3:])
    ok = abs(d0_slope - 2.0) <= 0.3 and abs(haus_slope - d0_slope) <= 0.3
    record("11a", ok, f"geo=1: d0 EOC={d0_slope:.3f} (target 2.0 +- 0.3), "
                      f"hausdorff EOC={haus_slope:.3f}")
    assert ok


def test_criterion_11_domain_map_rates_curved():
    rows = domain_metric_rows(2, (1, 2, 3))
    d0_slope = eoc([(h, d0) for h, d0, _, _ in rows][-3:])
    haus_slope = eoc([(h, gap) for h, _, _, gap in rows][-3:])
    matches = abs(haus_slope - d0_slope) <= 0.3
    in_band = abs(d0_slope - 3.0) <= 0.3
    ok = in_band and matches
    record("11b", ok, f"geo=2: d0 EOC={d0_slope:.3f} (target 3.0 +- 0.3; invalid "
                      f"target: spherical symmetry gives O(h^4), see README), "
                      f"hausdorff EOC={haus_slope:.3f}")
    assert matches, "hausdorff estimate must track d0"
    assert ok, (
        f"d0 EOC {d0_slope:.3f} exceeds the stated band 3.0 +- 0.3: quadratic "
        "interpolation of a sphere has no cubic error term, so d0 = O(h^4); "
        "the corresponding upper bound d0 <= C h^3 holds with margin")


# -- criterion 12: transport inequalities ------------------------------------------


def _random_smooth_fields(rng, count):
    fields = []
    for _ in range(count):
        wave = rng.uniform(0.5, 2.0, size=3)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        amp = rng.uniform(0.5, 1.5, size=3)

        def value(p, wave=wave, phase=phase, amp=amp):
            return np.stack([amp[c] * np.sin(wave[c] * p[:, (c + 1) % 3]
                                             + phase[c]) for c in range(3)],
                            axis=1)

        def grad_bound(wave=wave, amp=amp):
            return float(np.abs(amp * wave).max() * np.sqrt(3) + np.abs(amp).max())

        fields.append((Field(value=value, curl=None), grad_bound()))
    return fields


def test_criterion_12_transport_inequalities():
    rng = np.random.default_rng(99)
    fields = _random_smooth_fields(rng, 20)
    ok = True
    worst_ratio = 0.0
    for level in (1, 2, 3):
        mesh = generate_ball_mesh(level)
        dmap = radial_domain_map(mesh)
        report = dmap.discrepancies()
        rule = quadrature(4)
        from curlfem.smallmat import det3
        jac = mesh.jacobians(rule.points)
        det = det3(jac)
        phys = mesh.map_points(rule.points).reshape(-1, 3)
        mapped = dmap.forward(phys)
        # dense grid over the hold-all ball for the sup-norm estimates
        grid = rng.standard_normal((4000, 3))
        grid /= np.linalg.norm(grid, axis=1)[:, None]
        grid *= dmap.radius * rng.random((4000, 1)) ** (1 / 3)
        for fld, w1_bound in fields:
            diff = fld.value(mapped) - fld.value(phys)
            # L-infinity transport, componentwise over the sample set
            sup = np.abs(diff).max()
            w1 = max(np.abs(fld.value(grid)).max() + w1_bound, w1_bound)
            if sup > 1.05 * report.d0 * w1:
                ok = False
            worst_ratio = max(worst_ratio, sup / (report.d0 * w1))
            # L2 transport against the H1 norm over the hold-all ball
            dsq = np.abs(diff ** 2).sum(axis=1).reshape(det.shape)
            l2 = np.sqrt(np.einsum('mq,q,mq->', dsq, rule.weights, det))
            h1 = _h1_norm_estimate(fld, grid, dmap.radius)
            bound = (np.sqrt(report.theta) + 1.0) * report.d0 * h1
            if l2 > 1.05 * bound:
                ok = False
            worst_ratio = max(worst_ratio, l2 / bound)
    record(12, ok, f"transport bounds: worst LHS/RHS ratio = {worst_ratio:.3f} "
                   "(target <= 1.05)")
    assert ok


def _h1_norm_estimate(fld, grid, radius):
    # Monte-Carlo-free deterministic shell estimate: values on the sampled
    # grid plus the analytic gradient bound times the ball volume
    vol = 4.0 / 3.0 * np.pi * radius ** 3
    vals = fld.value(grid)
    mean_sq = (np.abs(vals) ** 2).sum(axis=1).mean()
    step = 1e-4
    grads_sq = 0.0
    for j in range(3):
        shifted = grid.copy()
        shifted[:, j] += step
        grads_sq += ((np.abs(fld.value(shifted) - vals) / step) ** 2).sum(axis=1)
    return float(np.sqrt((mean_sq + grads_sq.mean()) * vol))
