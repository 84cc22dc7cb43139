"""Built-in cavity problems with closed-form solutions.

Both presets use mu0 = 2, eps0 = 1, omega = 1 and a purely imaginary
current i*[J1,J2,J3], so the assembled load -i*omega*J is real.  The mass
term enters with positive sign (the template's eps is -eps0*I): that is the
coercive combination the currents are manufactured for, satisfying

    (1/2) curl curl E + E = [J1, J2, J3]

with the closed-form fields below, which also have vanishing tangential
trace on their domain boundary.
"""
from dataclasses import dataclass

import numpy as np

from .assembly import MaterialCoefficients, isotropic
from .transforms import Field

MU0 = 2.0
EPS0 = 1.0
OMEGA = 1.0


@dataclass(frozen=True)
class CavityProblem:
    name: str
    domain: str            # "ball" or "cube"
    materials: MaterialCoefficients
    exact: Field


def _ball_exact_value(points):
    p = np.atleast_2d(points)
    r2 = np.einsum('nc,nc->n', p, p)
    out = p.copy()
    out[:, 1] += 0.25 * np.cos(0.5 * np.pi * r2)
    return out


def _ball_exact_curl(points):
    p = np.atleast_2d(points)
    r2 = np.einsum('nc,nc->n', p, p)
    s = 0.25 * np.pi * np.sin(0.5 * np.pi * r2)
    return np.stack([s * p[:, 2], np.zeros(len(p)), -s * p[:, 0]], axis=1)


def _ball_current(points):
    p = np.atleast_2d(points)
    x1, x2, x3 = p[:, 0], p[:, 1], p[:, 2]
    r2 = np.einsum('nc,nc->n', p, p)
    c = np.cos(0.5 * np.pi * r2)
    s = np.sin(0.5 * np.pi * r2)
    j1 = x1 - np.pi ** 2 / 8.0 * x1 * x2 * c
    j2 = x2 + (0.25 + np.pi ** 2 / 8.0 * (x1 ** 2 + x3 ** 2)) * c + np.pi / 4.0 * s
    j3 = x3 - np.pi ** 2 / 8.0 * x2 * x3 * c
    return 1j * np.stack([j1, j2, j3], axis=1)


def ball_cavity():
    """Unit-ball cavity with a closed-form solution field."""
    materials = MaterialCoefficients(
        mu_inv=isotropic(1.0 / MU0), eps=isotropic(-EPS0), omega=OMEGA,
        current=_ball_current, tag="ball-cavity")
    exact = Field(value=_ball_exact_value, curl=_ball_exact_curl)
    return CavityProblem(name="ball-cavity", domain="ball",
                         materials=materials, exact=exact)


def _cube_exact_value(points):
    p = np.atleast_2d(points)
    sx, sy, sz = (np.sin(np.pi * p[:, i]) for i in range(3))
    return np.stack([sy * sz, sx * sz, sx * sy], axis=1)


def _cube_exact_curl(points):
    p = np.atleast_2d(points)
    sx, sy, sz = (np.sin(np.pi * p[:, i]) for i in range(3))
    cx, cy, cz = (np.cos(np.pi * p[:, i]) for i in range(3))
    return np.pi * np.stack(
        [sx * (cy - cz), sy * (cz - cx), sz * (cx - cy)], axis=1)


def _cube_current(points):
    # the exact field is divergence-free, so curl curl = -laplace = 2 pi^2 id
    return 1j * (np.pi ** 2 + 1.0) * _cube_exact_value(points)


def cube_cavity():
    """Unit-cube cavity control problem on exactly fitted meshes."""
    materials = MaterialCoefficients(
        mu_inv=isotropic(1.0 / MU0), eps=isotropic(-EPS0), omega=OMEGA,
        current=_cube_current, tag="cube-cavity")
    exact = Field(value=_cube_exact_value, curl=_cube_exact_curl)
    return CavityProblem(name="cube-cavity", domain="cube",
                         materials=materials, exact=exact)


PRESETS = {"ball-cavity": ball_cavity, "cube-cavity": cube_cavity}
