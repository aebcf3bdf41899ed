"""Numerical certification of the structural properties of the discrete
complex: composition-zero and rank identities, commuting interpolation,
weak continuity across faces, unisolvence, an optional inf-sup constant,
and the algebraic identities of solved systems."""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import assembly as asm
from . import elements as el
from .assembly import ND, P2, PHI, Q, RT, W
from .interpolate import FeFunction, diff_operator_matrix
from .mesh import build_mesh_from_tets, mesh_geometry
from .quadrature import TRIANGLE, get_rule


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={self.value:.3e} tol={self.tolerance:.1e} {self.detail}"


@dataclass
class CertificationReport:
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    def add(self, name, passed, value, tolerance, detail=""):
        self.checks.append(
            CheckResult(name, bool(passed), float(value), float(tolerance), detail)
        )

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_text(self):
        lines = [c.line() for c in self.checks]
        verdict = "ALL CHECKS PASSED" if self.passed else "CHECK FAILURES PRESENT"
        lines.append(f"{verdict} ({len(self.checks)} checks, {self.seconds:.2f}s)")
        return "\n".join(lines) + "\n"

    def to_json(self):
        payload = {
            "passed": self.passed,
            "seconds": self.seconds,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "value": c.value,
                    "tolerance": c.tolerance,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def face_jump_means(fe):
    """Integral of the jump of a piecewise field over each interior face.

    Returns (n_interior_faces, arity) integrals computed with triangle
    quadrature from both adjacent elements.
    """
    dofmap = fe.dofmap
    mesh = dofmap.mesh
    geom = mesh_geometry(mesh)
    ids = np.flatnonzero(~mesh.boundary_face)
    rule = get_rule(TRIANGLE, 6)
    q = rule.npoints
    tri = mesh.vertices[mesh.faces[ids]]
    areas = 0.5 * np.linalg.norm(
        np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
    )

    sides = []
    for s in range(2):
        tids = mesh.face_to_tets[ids, s]
        lf = np.argmax(mesh.tet_to_faces[tids] == ids[:, None], axis=1)
        fverts = mesh.tet_face_vertices[tids, lf]  # (nf, 3) local indices
        bary = np.zeros((ids.size, q, 4))
        for c in range(3):
            np.put_along_axis(
                bary,
                np.broadcast_to(fverts[:, c, None, None], (ids.size, q, 1)),
                rule.points[None, :, c, None],
                axis=2,
            )
        vals = np.einsum(
            "tj,tqj...->tq...",
            asm.gather_coefficients(dofmap, fe.coeffs, tids),
            el.nodal_values(dofmap.element, geom.take(tids), bary),
        )
        sides.append(np.einsum("q,tq...->t...", rule.weights, vals))
    return (sides[0] - sides[1]) * areas.reshape((-1,) + (1,) * (sides[0].ndim - 1))


def check_complex(mesh, report=None, rank_tol=1e-8):
    """Composition-zero, injectivity/rank and exactness counts (dense)."""
    report = report if report is not None else CertificationReport()
    dofmaps = {s: asm.build_dof_map(s, mesh) for s in (P2, ND, RT, Q, PHI, W)}
    if dofmaps[PHI].dim > 2000:
        raise MemoryError(
            "dense rank checks are limited to small meshes (n <= 2); "
            "use a coarser level"
        )
    grad = diff_operator_matrix("grad", dofmaps).matrix
    curl = diff_operator_matrix("curl", dofmaps).matrix
    div = diff_operator_matrix("div", dofmaps).matrix

    cg = abs(curl @ grad).max() if grad.shape[1] else 0.0
    dc = abs(div @ curl).max() if curl.shape[1] else 0.0
    report.add("complex.curl_grad_zero", cg <= 1e-12, float(cg), 1e-12)
    report.add("complex.div_curl_zero", dc <= 1e-12, float(dc), 1e-12)

    nv, ne, nf = mesh.interior_counts()

    def rank(mat):
        if min(mat.shape) == 0:
            return 0
        sv = np.linalg.svd(mat.toarray(), compute_uv=False)
        return int(np.sum(sv > rank_tol * sv[0]))

    r_grad = rank(grad)
    report.add(
        "complex.grad_injective",
        r_grad == dofmaps[W].dim,
        float(r_grad),
        float(dofmaps[W].dim),
        detail=f"rank(grad)={r_grad}, dim W_h={dofmaps[W].dim}",
    )
    r_curl = rank(curl)
    expected_curl = ne - nv
    report.add(
        "complex.rank_curl_euler",
        r_curl == expected_curl,
        float(r_curl),
        float(expected_curl),
        detail=f"rank(curl)={r_curl}, |E_int|-|V_int|={expected_curl}",
    )
    r_div = rank(div)
    report.add(
        "complex.div_onto_zero_mean",
        r_div == dofmaps[Q].dim - 1,
        float(r_div),
        float(dofmaps[Q].dim - 1),
    )
    nullity_div = dofmaps[RT].dim - r_div
    report.add(
        "complex.exactness_at_rt",
        nullity_div == r_curl,
        float(nullity_div),
        float(r_curl),
        detail=f"nullity(div)={nullity_div}, rank(curl)={r_curl}",
    )
    return report


def _monomial_field(alpha, arity, comp=0):
    """Global polynomial x^a y^b z^c (times a unit vector for arity 3)."""
    alpha = np.asarray(alpha)

    def scalar(X):
        return np.prod(X**alpha, axis=1)

    def gradient(X):
        out = np.zeros((X.shape[0], 3))
        for k in range(3):
            if alpha[k] == 0:
                continue
            am = alpha.copy()
            am[k] -= 1
            out[:, k] = alpha[k] * np.prod(X**am, axis=1)
        return out

    if arity == 1:
        from .fields import AnalyticField

        return AnalyticField("mono", 1, scalar, gradient=gradient)

    def vec(X):
        out = np.zeros((X.shape[0], 3))
        out[:, comp] = scalar(X)
        return out

    def jac(X):
        out = np.zeros((X.shape[0], 3, 3))
        out[:, comp, :] = gradient(X)
        return out

    from .fields import AnalyticField

    return AnalyticField("mono_vec", 3, vec, jacobian=jac)


def _vector_curl_field(field):
    """curl of a vector AnalyticField with a jacobian."""
    from .fields import AnalyticField

    def curl(X):
        J = field.jacobian(X)
        return np.stack(
            [
                J[:, 2, 1] - J[:, 1, 2],
                J[:, 0, 2] - J[:, 2, 0],
                J[:, 1, 0] - J[:, 0, 1],
            ],
            axis=1,
        )

    return AnalyticField("curl_of_" + field.tag, 3, curl)


def _gradient_field(field):
    from .fields import AnalyticField

    return AnalyticField("grad_of_" + field.tag, 3, field.gradient)


def _p3_alphas():
    return [
        (a, b, c)
        for a in range(4)
        for b in range(4)
        for c in range(4)
        if a + b + c <= 3
    ]


def check_commuting(mesh, report=None, tol=1e-10):
    """Per-element DoF identities for a basis of cubic test fields.

    grad route: the Phi DoFs of the gradient of the locally interpolated
    scalar equal the Phi DoFs of the analytic gradient.  curl route: the
    RT DoFs of the curl of the locally interpolated vector equal the RT
    DoFs of the analytic curl.  The edge restriction of the interpolant
    coincides with the canonical tangential interpolant.
    """
    report = report if report is not None else CertificationReport()
    geom = mesh_geometry(mesh)
    Cw = el.nodal_coefficients(el.W_NC, geom)
    Cphi = el.nodal_coefficients(el.PHI_NC, geom)

    # Phi DoFs applied to gradients of the W shape monomials (exact degrees)
    T = mesh.num_tets
    ebary, erule = el.edge_quad_bary(geom)
    q = erule.npoints
    gw = el.shape_gradients(el.W_NC, geom, ebary.reshape(T, 6 * q, 4))
    gw = gw.reshape(T, 6, q, -1, 3)
    moments = el._edge_moments(geom, gw, erule)
    fbary, frule = el.face_quad_bary(geom)
    qf = frule.npoints
    gwf = el.shape_gradients(el.W_NC, geom, fbary.reshape(T, 4 * qf, 4))
    gwf = gwf.reshape(T, 4, qf, -1, 3)
    fluxes = el._face_normal_integrals(geom, gwf, frule)
    B = np.concatenate([moments, fluxes], axis=1)  # (T, 16, 14)

    worst_grad = 0.0
    for alpha in _p3_alphas():
        fld = _monomial_field(alpha, 1)
        wdofs = el.apply_dofs(el.W_NC, geom, fld)
        lhs = np.einsum("tij,tjk,tk->ti", B, Cw, wdofs)
        rhs = el.apply_dofs(el.PHI_NC, geom, _gradient_field(fld))
        scale = max(np.abs(rhs).max(), 1.0)
        worst_grad = max(worst_grad, float(np.abs(lhs - rhs).max() / scale))
    report.add(
        "commuting.grad_route_p3", worst_grad <= tol, worst_grad, tol,
        detail="Phi DoFs of grad(I_W v) vs Phi DoFs of grad v",
    )

    # RT DoFs of curl of the Phi monomials: constant curls against face data
    curls = el.shape_curls(el.PHI_NC, geom)  # (T, 16, 3)
    K = np.einsum(
        "tfk,tik->tfi", geom.face_normals * geom.face_areas[:, :, None], curls
    )  # (T, 4, 16)
    worst_curl = 0.0
    worst_ind = 0.0
    for alpha in _p3_alphas():
        for comp in range(3):
            fld = _monomial_field(alpha, 3, comp)
            pdofs = el.apply_dofs(el.PHI_NC, geom, fld)
            lhs = np.einsum("tfi,tij,tj->tf", K, Cphi, pdofs)
            rhs = el.apply_dofs(el.RT0, geom, _vector_curl_field(fld))
            scale = max(np.abs(rhs).max(), 1.0)
            worst_curl = max(worst_curl, float(np.abs(lhs - rhs).max() / scale))
            nddofs = el.apply_dofs(el.NEDELEC2, geom, fld)
            worst_ind = max(
                worst_ind,
                float(np.abs(pdofs[:, :12] - nddofs).max() / max(np.abs(nddofs).max(), 1.0)),
            )
    report.add(
        "commuting.curl_route_p3", worst_curl <= tol, worst_curl, tol,
        detail="RT DoFs of curl(I_Phi v) vs RT DoFs of curl v",
    )
    report.add(
        "commuting.edge_restriction_is_canonical", worst_ind <= tol, worst_ind, tol,
        detail="edge DoFs of the enriched interpolant match the tangential interpolant",
    )
    _check_commuting_global(mesh, report, tol)
    return report


def _bubble_compatible_fields():
    """Boundary-compatible polynomial test fields on the unit cube.

    The scalar field and the face integrals of its normal derivative vanish
    on the boundary; the vector field vanishes on the boundary.  Degrees
    stay within the exactness of the interpolation quadratures.
    """
    from .fields import AnalyticField

    def b(X):
        return np.prod(X * (1.0 - X), axis=1)

    def db(X):
        out = np.empty_like(X)
        for k in range(3):
            others = [i for i in range(3) if i != k]
            out[:, k] = (1.0 - 2.0 * X[:, k]) * np.prod(
                X[:, others] * (1.0 - X[:, others]), axis=1
            )
        return out

    def m(X):
        return np.prod(X - 0.5, axis=1)

    def dm(X):
        out = np.empty_like(X)
        out[:, 0] = (X[:, 1] - 0.5) * (X[:, 2] - 0.5)
        out[:, 1] = (X[:, 0] - 0.5) * (X[:, 2] - 0.5)
        out[:, 2] = (X[:, 0] - 0.5) * (X[:, 1] - 0.5)
        return out

    def scalar_value(X):
        return b(X) * m(X)

    def scalar_gradient(X):
        return db(X) * m(X)[:, None] + b(X)[:, None] * dm(X)

    scalar = AnalyticField("bubble_scalar", 1, scalar_value, gradient=scalar_gradient)
    grad_field = AnalyticField("bubble_gradient", 3, scalar_gradient)

    c = np.array([0.3, -0.7, 0.55])

    def vec_value(X):
        return b(X)[:, None] * c

    def vec_jacobian(X):
        return c[None, :, None] * db(X)[:, None, :]

    vec = AnalyticField("bubble_vector", 3, vec_value, jacobian=vec_jacobian)

    def curl_value(X):
        J = vec_jacobian(X)
        return np.stack(
            [J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]],
            axis=1,
        )

    curl = AnalyticField("bubble_vector_curl", 3, curl_value)
    return scalar, grad_field, vec, curl


def _check_commuting_global(mesh, report, tol):
    """Global interior-DoF identities for boundary-compatible fields."""
    from . import interpolate as itp

    dofmaps = {s: asm.build_dof_map(s, mesh) for s in (P2, ND, RT, Q, PHI, W)}
    scalar, grad_field, vec, curl = _bubble_compatible_fields()

    iw = itp.canonical_interpolate(dofmaps[W], scalar)
    iphi_grad = itp.canonical_interpolate(dofmaps[PHI], grad_field)
    G = itp.diff_operator_matrix("grad", dofmaps).matrix
    res = np.abs(G @ iw.coeffs - iphi_grad.coeffs).max()
    scale = max(np.abs(iphi_grad.coeffs).max(), 1.0)
    report.add(
        "commuting.grad_route_global", res / scale <= tol, res / scale, tol,
        detail="grad(I_W v) = I_Phi(grad v) on interior DoFs",
    )

    iphi = itp.canonical_interpolate(dofmaps[PHI], vec)
    irt = itp.canonical_interpolate(dofmaps[RT], curl)
    K = itp.diff_operator_matrix("curl", dofmaps).matrix
    res = np.abs(K @ iphi.coeffs - irt.coeffs).max()
    scale = max(np.abs(irt.coeffs).max(), 1.0)
    report.add(
        "commuting.curl_route_global", res / scale <= tol, res / scale, tol,
        detail="curl(I_Phi v) = I_RT(curl v) on interior DoFs",
    )

    ind = itp.diff_operator_matrix("ind", dofmaps).matrix
    ind_nd = itp.canonical_interpolate(dofmaps[ND], vec)
    res = np.abs(ind @ iphi.coeffs - ind_nd.coeffs).max()
    scale = max(np.abs(ind_nd.coeffs).max(), 1.0)
    report.add(
        "commuting.edge_restriction_global", res / scale <= tol, res / scale, tol,
        detail="edge restriction of I_Phi equals the tangential interpolant",
    )


def check_weak_continuity(mesh, report=None, nsamples=20, seed=1234, tol=1e-10):
    """Face means of jumps vanish for random members of the vector space."""
    report = report if report is not None else CertificationReport()
    dofmap = asm.build_dof_map(PHI, mesh)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(nsamples):
        c = rng.standard_normal(dofmap.dim)
        fe = FeFunction(dofmap, c)
        jumps = face_jump_means(fe)
        worst = max(worst, float(np.abs(jumps).max() / max(1.0, np.abs(c).max())))
    report.add(
        "weak_continuity.face_jump_means", worst <= tol, worst, tol,
        detail=f"{nsamples} random coefficient vectors",
    )
    return report


def check_unisolvence(report=None, ntets=100, seed=4321, cond_limit=1e9):
    """DoF matrices stay invertible on random shape-regular tets."""
    report = report if report is not None else CertificationReport()
    rng = np.random.default_rng(seed)
    worst = {el.PHI_NC: 0.0, el.W_NC: 0.0}
    count = 0
    while count < ntets:
        verts = rng.uniform(-1.0, 1.0, size=(4, 3))
        e = verts[1:] - verts[0]
        det = np.linalg.det(e)
        if det < 0:
            verts = verts[[0, 1, 3, 2]]
            det = -det
        diam = max(
            np.linalg.norm(verts[i] - verts[j]) for i in range(4) for j in range(i)
        )
        if det / diam**3 <= 0.05:
            continue
        count += 1
        m = build_mesh_from_tets(verts, [[0, 1, 2, 3]])
        geom = mesh_geometry(m)
        for kind in worst:
            worst[kind] = max(worst[kind], float(el.unisolvence_check(kind, geom)[0]))
    for kind, val in worst.items():
        report.add(
            f"unisolvence.{kind}", np.isfinite(val) and val < cond_limit, val,
            cond_limit, detail=f"max condition number over {ntets} random tets",
        )
    return report


def check_infsup(mesh, eps_list=(1.0, 1e-3, 1e-6), report=None, floor=1e-8):
    """Dense smallest generalized singular value of the coupling form.

    There is no reference value; the testable claims are positivity and
    mesh stability, reported for each listed perturbation parameter.
    """
    report = report if report is not None else CertificationReport()
    dofmaps = {s: asm.build_dof_map(s, mesh) for s in (P2, ND, RT, Q, PHI, W)}
    if dofmaps[PHI].dim > 2000:
        raise MemoryError("inf-sup check is dense; use n <= 2")
    S = asm.assemble_bilinear("phi_stiffness", mesh, dofmaps).matrix.toarray()
    Mnd = asm.assemble_bilinear("ind_mass", mesh, dofmaps).matrix.toarray()
    Mrt = asm.assemble_bilinear("rt_mass", mesh, dofmaps).matrix.toarray()
    Ccoup = asm.assemble_bilinear("curl_coupling", mesh, dofmaps).matrix.toarray()
    vols = asm.q_weights(mesh)
    Kop = diff_operator_matrix("curl", dofmaps).matrix.toarray()
    Dop = diff_operator_matrix("div", dofmaps).matrix.toarray()
    Kc = Kop.T @ Mrt @ Kop
    D = vols[:, None] * Dop  # (mu_k, div q_j) = |T_k| (div q_j)|_k
    Y = Mrt + Dop.T @ (vols[:, None] * Dop)

    for eps in eps_list:
        X = scipy.linalg.block_diag(
            eps**2 * S + Kc + Mnd, np.diag(vols)
        )
        B = np.vstack([Ccoup, -D])
        Xinv_B = np.linalg.solve(X, B)
        G = B.T @ Xinv_B
        evals = scipy.linalg.eigh(G, Y, eigvals_only=True)
        beta = float(np.sqrt(max(evals.min(), 0.0)))
        report.add(
            f"infsup.beta_eps{eps:g}", beta > floor, beta, floor,
            detail="smallest generalized singular value of the coupling form",
        )
    return report


def check_solution_identities(sol, dofmaps, report=None, rtol=1e-8):
    """Algebraic identities of a solved decoupled system."""
    from .solvers import solution_identity_norms

    report = report if report is not None else CertificationReport()
    norms = solution_identity_norms(sol, dofmaps)
    scale = norms["scale"]
    prefix = f"identities.{sol.method}_eps{sol.eps:g}"
    report.add(
        f"{prefix}.lambda_zero",
        norms["lambda_l2"] <= rtol * scale,
        norms["lambda_l2"],
        rtol * scale,
    )
    report.add(
        f"{prefix}.div_p_zero",
        norms["div_p_l2"] <= rtol * scale,
        norms["div_p_l2"],
        rtol * scale,
    )
    report.add(
        f"{prefix}.curl_phi_zero",
        norms["curl_phi_l2"] <= rtol * scale,
        norms["curl_phi_l2"],
        rtol * scale,
    )
    if sol.method == "interp":
        report.add(
            f"{prefix}.ind_phi_equals_grad_u",
            norms["ind_phi_minus_grad_u_l2"] <= rtol * scale,
            norms["ind_phi_minus_grad_u_l2"],
            rtol * scale,
        )
        # phi lies in the range of the gradient: least-squares residual
        grad = diff_operator_matrix("grad", dofmaps).matrix
        phi = sol.phi_h.coeffs
        import scipy.sparse.linalg as spla

        gram = (grad.T @ grad).tocsc()
        wls = spla.spsolve(gram, grad.T @ phi)
        res = float(np.linalg.norm(grad @ wls - phi) / (1.0 + np.linalg.norm(phi)))
        report.add(
            f"{prefix}.phi_in_grad_w", res <= rtol, res, rtol,
            detail="least-squares residual of grad w = phi",
        )
    return report
