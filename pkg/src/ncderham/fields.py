"""Closed-form data for the two convergence experiments, with a
finite-difference oracle that cross-checks every provided derivative."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AnalyticField:
    """Closed-form field with whatever derivative evaluators it supports.

    Scalar fields: ``value (M,) , gradient (M,3), hessian (M,3,3),
    laplacian (M,), bilaplacian (M,)``.  Vector fields: ``value (M,3),
    jacobian (M,3,3)``.
    """

    tag: str
    arity: int
    value: callable
    gradient: callable = None
    hessian: callable = None
    laplacian: callable = None
    bilaplacian: callable = None
    jacobian: callable = None


def _sin2_parts(t):
    """sin^2(pi t) and its first four derivatives."""
    pi = np.pi
    s = np.sin(pi * t) ** 2
    d1 = pi * np.sin(2 * pi * t)
    d2 = 2 * pi**2 * np.cos(2 * pi * t)
    d3 = -4 * pi**3 * np.sin(2 * pi * t)
    d4 = -8 * pi**4 * np.cos(2 * pi * t)
    return s, d1, d2, d3, d4


def smooth_case_fields(eps):
    """Exact data for the clamped test without boundary layer.

    u = sin^2(pi x) sin^2(pi y) sin^2(pi z); the source is
    eps^2 * Lap^2 u - Lap u, derived analytically.  Both u and its normal
    derivative vanish on the boundary of the unit cube.
    """
    def parts(X):
        return [_sin2_parts(X[:, k]) for k in range(3)]

    def value(X):
        p = parts(X)
        return p[0][0] * p[1][0] * p[2][0]

    def gradient(X):
        p = parts(X)
        return np.stack(
            [
                p[0][1] * p[1][0] * p[2][0],
                p[0][0] * p[1][1] * p[2][0],
                p[0][0] * p[1][0] * p[2][1],
            ],
            axis=1,
        )

    def hessian(X):
        p = parts(X)
        H = np.empty((X.shape[0], 3, 3))
        for a in range(3):
            for b in range(3):
                fac = [p[k][0] for k in range(3)]
                if a == b:
                    fac[a] = p[a][2]
                else:
                    fac[a] = p[a][1]
                    fac[b] = p[b][1]
                H[:, a, b] = fac[0] * fac[1] * fac[2]
        return H

    def laplacian(X):
        p = parts(X)
        return (
            p[0][2] * p[1][0] * p[2][0]
            + p[0][0] * p[1][2] * p[2][0]
            + p[0][0] * p[1][0] * p[2][2]
        )

    def bilaplacian(X):
        p = parts(X)
        s = [p[k][0] for k in range(3)]
        d2 = [p[k][2] for k in range(3)]
        d4 = [p[k][4] for k in range(3)]
        return (
            d4[0] * s[1] * s[2]
            + s[0] * d4[1] * s[2]
            + s[0] * s[1] * d4[2]
            + 2 * (d2[0] * d2[1] * s[2] + d2[0] * s[1] * d2[2] + s[0] * d2[1] * d2[2])
        )

    def source(X):
        return eps**2 * bilaplacian(X) - laplacian(X)

    u = AnalyticField(
        "u_smooth", 1, value, gradient, hessian, laplacian, bilaplacian
    )
    phi = AnalyticField("grad_u_smooth", 3, gradient, jacobian=hessian)
    f = AnalyticField(f"f_smooth_eps{eps:g}", 1, source)
    return {"u": u, "phi": phi, "f": f, "eps": eps}


def layer_case_fields():
    """Data for the boundary-layer test: the limit solution of the Poisson
    problem, u0 = sin(pi x) sin(pi y) sin(pi z), with f = -Lap u0."""
    pi = np.pi

    def trig(X):
        return np.sin(pi * X[:, 0]), np.sin(pi * X[:, 1]), np.sin(pi * X[:, 2])

    def cotrig(X):
        return np.cos(pi * X[:, 0]), np.cos(pi * X[:, 1]), np.cos(pi * X[:, 2])

    def value(X):
        sx, sy, sz = trig(X)
        return sx * sy * sz

    def gradient(X):
        sx, sy, sz = trig(X)
        cx, cy, cz = cotrig(X)
        return pi * np.stack([cx * sy * sz, sx * cy * sz, sx * sy * cz], axis=1)

    def hessian(X):
        sx, sy, sz = trig(X)
        cx, cy, cz = cotrig(X)
        H = np.empty((X.shape[0], 3, 3))
        H[:, 0, 0] = -(pi**2) * sx * sy * sz
        H[:, 1, 1] = -(pi**2) * sx * sy * sz
        H[:, 2, 2] = -(pi**2) * sx * sy * sz
        H[:, 0, 1] = H[:, 1, 0] = pi**2 * cx * cy * sz
        H[:, 0, 2] = H[:, 2, 0] = pi**2 * cx * sy * cz
        H[:, 1, 2] = H[:, 2, 1] = pi**2 * sx * cy * cz
        return H

    def laplacian(X):
        return -3 * pi**2 * value(X)

    def source(X):
        return 3 * pi**2 * value(X)

    u0 = AnalyticField("u0_layer", 1, value, gradient, hessian, laplacian)
    phi0 = AnalyticField("grad_u0_layer", 3, gradient, jacobian=hessian)
    f = AnalyticField("f_layer", 1, source)
    return {"u0": u0, "phi0": phi0, "f": f}


def _sample_points(npoints, rng, margin=0.05):
    return margin + (1 - 2 * margin) * rng.random((npoints, 3))


def _fd_gradient(fn, X, step):
    out = np.empty((X.shape[0], 3) + np.asarray(fn(X[:1])).shape[1:])
    for k in range(3):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, k] += step
        Xm[:, k] -= step
        out[:, k] = (np.asarray(fn(Xp)) - np.asarray(fn(Xm))) / (2 * step)
    return out


def _fd_laplacian(fn, X, step):
    center = -6.0 * np.asarray(fn(X))
    for k in range(3):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, k] += step
        Xm[:, k] -= step
        center = center + np.asarray(fn(Xp)) + np.asarray(fn(Xm))
    return center / step**2


def fd_validate(field, npoints=50, seed=0, step=1e-4, rtol=1e-6):
    """Cross-check every provided derivative against central differences.

    Deviations are measured relative to the sampled magnitude of the exact
    quantity.  The nested bi-Laplacian check uses a wider step and a
    looser 1e-5 threshold (two stacked second-difference stencils).
    """
    rng = np.random.default_rng(seed)
    X = _sample_points(npoints, rng)
    checks = {}

    def record(name, fd, exact, tol):
        scale = max(np.abs(exact).max(), 1e-12)
        dev = float(np.abs(fd - exact).max() / scale)
        checks[name] = {"max_rel_dev": dev, "tol": tol, "passed": dev <= tol}

    if field.arity == 1:
        if field.gradient is not None:
            record("gradient", _fd_gradient(field.value, X, step), field.gradient(X), rtol)
        if field.hessian is not None and field.gradient is not None:
            fd = _fd_gradient(field.gradient, X, step)
            record("hessian", np.swapaxes(fd, 1, 2), field.hessian(X), rtol)
        if field.laplacian is not None:
            record("laplacian", _fd_laplacian(field.value, X, 1e-3), field.laplacian(X), 1e-5)
        if field.bilaplacian is not None:
            fd = _fd_laplacian(lambda Y: _fd_laplacian(field.value, Y, 1e-3), X, 1e-3)
            record("bilaplacian", fd, field.bilaplacian(X), 1e-5)
    else:
        if field.jacobian is not None:
            fd = _fd_gradient(field.value, X, step)  # fd[:, b, a] = d v_a / d x_b
            record("jacobian", np.swapaxes(fd, 1, 2), field.jacobian(X), rtol)

    passed = all(c["passed"] for c in checks.values())
    return {"tag": field.tag, "passed": passed, "checks": checks}


def fd_source_residual(u_field, f_field, eps, npoints=50, seed=0, step=1e-3):
    """Max relative deviation of f from the nested finite-difference
    eps^2 * Lap(Lap u) - Lap u, over random interior points."""
    rng = np.random.default_rng(seed)
    X = _sample_points(npoints, rng)
    lap = _fd_laplacian(u_field.value, X, step)
    bilap = _fd_laplacian(lambda Y: _fd_laplacian(u_field.value, Y, step), X, step)
    fd = eps**2 * bilap - lap
    exact = f_field.value(X)
    scale = max(np.abs(exact).max(), 1e-12)
    return float(np.abs(fd - exact).max() / scale)
