"""Error norms, EOC slopes, and the transport-identity / defect diagnostics.

The matrix-difference identity checks and the defect dual norms turn the
analysis machinery behind the convergence proof into executable checks;
they operate purely on assembled matrices and nodal vectors.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import roots_legendre

from .assembly import (
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    element_jacobians,
    extract_blocks,
)
from .linsolve import factorize
from .mesh import MeshTopology, node_coordinates, split_components

ERROR_COLUMNS = (
    "err_x_LinfL2",
    "err_x_LinfH1",
    "err_v_LinfL2",
    "err_v_LinfH1",
    "err_u_LinfL2",
    "err_u_L2H1",
)


def matrix_norm(z: np.ndarray, K) -> float:
    """(z' K z)^{1/2}; arity-n vectors are handled per component, summed in squares."""
    z = np.asarray(z, dtype=float)
    n = K.shape[0]
    if z.size % n != 0:
        raise ValueError(f"vector of size {z.size} incompatible with matrix of size {n}")
    comps = z.reshape(-1, n)
    q = float(sum(c @ (K @ c) for c in comps))
    if q < 0:
        scale = abs(K).max() * float(np.dot(z, z))
        if q < -1e-12 * max(scale, 1e-300):
            raise ValueError(f"negative quadratic form {q:.3e}: matrix is not PSD")
        q = 0.0
    return np.sqrt(q)


def _fd_gradient(exact_eval, pts, t, step=1e-6):
    dim = pts.shape[-1]
    g = np.empty(pts.shape)
    for d in range(dim):
        dp = np.zeros(dim)
        dp[d] = step
        g[..., d] = (exact_eval(pts + dp, t) - exact_eval(pts - dp, t)) / (2 * step)
    return g


def error_vs_exact(topology: MeshTopology, x: np.ndarray, coeffs: np.ndarray,
                   exact_eval, t: float, exact_grad=None):
    """(L2 error, H1-seminorm error) of a scalar FE function against a closed form.

    Quadrature over the discrete domain; the exact gradient defaults to
    central differences of `exact_eval` with step 1e-6.
    """
    sc, pts, det, inv = element_jacobians(topology, x, None, "error evaluation")
    conn = topology.elements
    ue = coeffs[conn]  # (ne, nl)
    uh = ue @ sc["N"].T  # (ne, nq)
    B = np.matmul(sc["G"][None], inv)  # (ne, nq, nl, dim)
    guh = np.matmul(ue[:, None, None, :], B)[:, :, 0, :]
    flat = pts.reshape(-1, topology.dim)
    uex = exact_eval(flat, t).reshape(uh.shape)
    if exact_grad is not None:
        gex = exact_grad(flat, t).reshape(guh.shape)
    else:
        gex = _fd_gradient(exact_eval, flat, t).reshape(guh.shape)
    w = sc["rule"].weights[None, :] * det
    l2 = np.sqrt(np.sum(w * (uh - uex) ** 2))
    h1 = np.sqrt(np.sum(w * np.sum((guh - gex) ** 2, axis=-1)))
    return float(l2), float(h1)


def aggregate_time_errors(per_step, tau: float):
    """(L_inf(L2), L_inf(H1), L2(H1)) from a series of per-step (L2, H1) pairs."""
    arr = np.asarray(per_step, dtype=float)
    if arr.size == 0:
        raise ValueError("empty error series")
    linf_l2 = float(arr[:, 0].max())
    linf_h1 = float(arr[:, 1].max())
    l2_h1 = float(np.sqrt(tau * np.sum(arr[:, 1] ** 2)))
    return linf_l2, linf_h1, l2_h1


def eoc(table):
    """Pairwise slopes and global log-log least-squares slope for (h, err) rows."""
    hs = np.array([row[0] for row in table], dtype=float)
    errs = np.array([row[1] for row in table], dtype=float)
    if len(hs) < 2:
        raise ValueError("need >= 2 rows to compute EOC")
    if np.any(errs <= 0) or np.any(hs <= 0):
        raise ValueError("EOC requires positive h and error entries")
    pairwise = np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])
    slope, _ = np.polyfit(np.log(hs), np.log(errs), 1)
    return pairwise, float(slope)


# ---------------------------------------------------------------------------
# transport identities (matrix differences along the straight line of meshes)

_THETA_RULE = roots_legendre(10)


def _theta_integrand(topology, y, e, w, z, kind, theta, exactness):
    x_theta = y + theta * e
    sc, _, det, inv = element_jacobians(topology, x_theta, exactness,
                                        "matrix-difference identity")
    conn = topology.elements
    wq = sc["rule"].weights[None, :] * det
    B = np.einsum("qla,eqab->eqlb", sc["G"], inv)
    ec = split_components(e, topology.dim)  # (dim, N)
    # grad_e[c] has shape (ne, nq, dim): spatial gradient of component c
    grad_e = np.einsum("eqlb,cel->ceqb", B, ec[:, conn])
    if kind == "mass":
        div_e = np.einsum("ceqc->eq", grad_e)
        wh = np.einsum("qa,ea->eq", sc["N"], w[conn])
        zh = np.einsum("qa,ea->eq", sc["N"], z[conn])
        return float(np.sum(wq * wh * div_e * zh))
    gw = np.einsum("eqlb,el->eqb", B, w[conn])
    gz = np.einsum("eqlb,el->eqb", B, z[conn])
    div_e = np.einsum("ceqc->eq", grad_e)
    # D = trace(grad e) I - (grad e + grad e^T); (grad e)_{ab} = d_b e_a
    ge = np.moveaxis(grad_e, 0, 2)  # (ne, nq, dim_comp=a, dim_deriv=b)
    D = div_e[..., None, None] * np.eye(topology.dim) - (ge + np.swapaxes(ge, -1, -2))
    return float(np.sum(wq * np.einsum("eqa,eqab,eqb->eq", gw, D, gz)))


def check_matrix_difference_identity(topology: MeshTopology, y, e, w, z, kind: str):
    """Transport identity for K(y+e) - K(y): returns (lhs, rhs, rel. discrepancy).

    lhs is assembled directly; rhs is a 10-point Gauss quadrature in the
    homotopy parameter of the intermediate-domain integrals.
    """
    if kind not in ("mass", "stiffness"):
        raise ValueError(f"unknown kind {kind!r}")
    assemble = assemble_mass if kind == "mass" else assemble_stiffness
    exactness = None
    K1 = assemble(topology, y + e)
    K0 = assemble(topology, y)
    lhs = float(w @ ((K1 - K0) @ z))
    tq, tw = _THETA_RULE
    rhs = 0.0
    for ti, wi in zip((tq + 1) / 2, tw / 2):
        rhs += wi * _theta_integrand(topology, y, e, w, z, kind, ti, exactness)
    scale = max(abs(lhs), abs(rhs), matrix_norm(w, K0) * matrix_norm(z, K0), 1e-300)
    return lhs, rhs, abs(lhs - rhs) / scale


def norm_growth_factors(topology: MeshTopology, y, e, n_theta: int = 11):
    """Measured sup-norm bounds (mu, eta) along the mesh homotopy.

    mu bounds |div e_h|, eta bounds |trace(grad e) I - (grad e + grad e^T)|
    (Frobenius), both sampled at quadrature points of the theta-meshes.
    """
    mu = eta = 0.0
    for theta in np.linspace(0.0, 1.0, n_theta):
        x_theta = y + theta * e
        sc, _, det, inv = element_jacobians(topology, x_theta, None, "norm growth")
        conn = topology.elements
        B = np.einsum("qla,eqab->eqlb", sc["G"], inv)
        ec = split_components(e, topology.dim)
        grad_e = np.einsum("eqlb,cel->ceqb", B, ec[:, conn])
        div_e = np.einsum("ceqc->eq", grad_e)
        ge = np.moveaxis(grad_e, 0, 2)
        D = div_e[..., None, None] * np.eye(topology.dim) - (ge + np.swapaxes(ge, -1, -2))
        mu = max(mu, float(np.abs(div_e).max()))
        eta = max(eta, float(np.sqrt((D ** 2).sum(axis=(-1, -2))).max()))
    return mu, eta


# ---------------------------------------------------------------------------
# defect dual norms

def dual_norm_interior(blocks_M, blocks_A, d: np.ndarray) -> float:
    """(d' M22 A22^{-1} M22 d)^{1/2} for an interior (arity-n) defect vector."""
    M22, A22 = blocks_M.A22, blocks_A.A22
    solver = factorize(A22, role="dual norm A22")
    comps = np.asarray(d, dtype=float).reshape(-1, M22.shape[0])
    total = 0.0
    for c in comps:
        md = M22 @ c
        total += float(md @ solver.solve(md))
    return float(np.sqrt(total))


def defect_velocity(topology: MeshTopology, x_star: np.ndarray,
                    v_star: np.ndarray) -> float:
    """Dual norm of the velocity-law defect for interpolated exact data.

    Solves M22 d = A22 v*_int + A21 v*_bnd per component and returns
    (d' M22 A22^{-1} M22 d)^{1/2}.
    """
    M = assemble_mass(topology, x_star)
    A = assemble_stiffness(topology, x_star)
    ng = topology.n_boundary
    bm = extract_blocks(M, ng)
    ba = extract_blocks(A, ng)
    m_solver = factorize(bm.A22, role="defect M22")
    a_solver = factorize(ba.A22, role="defect A22")
    vc = split_components(v_star, topology.dim)
    total = 0.0
    for c in vc:
        r = ba.A22 @ c[ng:] + ba.A21 @ c[:ng]
        d = m_solver.solve(r)
        md = bm.A22 @ d
        z = a_solver.solve(md)
        total += float(md @ z)
    return float(np.sqrt(total))


def defect_diffusion(topology: MeshTopology, position_at, u_nodal_at, f_eval,
                     g_eval, beta: float, t: float, eps: float = 1e-5,
                     check_eps: bool = False) -> float:
    """Dual norm of the diffusion defect at time t for interpolated exact data.

    d/dt(M(x*)u*) is approximated by a central difference with step eps;
    with check_eps, a 10x larger step must agree within 5% or a warning
    is emitted.
    """

    def compute(e):
        x_t = position_at(t)
        xp, xm = position_at(t + e), position_at(t - e)
        up = u_nodal_at(node_coordinates(topology, xp), t + e)
        um = u_nodal_at(node_coordinates(topology, xm), t - e)
        u_t = u_nodal_at(node_coordinates(topology, x_t), t)
        M_t = assemble_mass(topology, x_t)
        A_t = assemble_stiffness(topology, x_t)
        b = assemble_load(topology, x_t, f_eval, g_eval, t, beta)
        r = (assemble_mass(topology, xp) @ up - assemble_mass(topology, xm) @ um) / (2 * e)
        r = r + beta * (A_t @ u_t) - b
        d = factorize(M_t, role="defect mass").solve(r)
        md = M_t @ d
        z = factorize((M_t + A_t).tocsc(), role="defect M+A").solve(md)
        return float(np.sqrt(md @ z))

    val = compute(eps)
    if check_eps:
        val10 = compute(10 * eps)
        if abs(val10 - val) > 0.05 * max(abs(val), 1e-300):
            warnings.warn(
                f"diffusion defect is eps-sensitive: {val:.3e} vs {val10:.3e} at 10x step",
                stacklevel=2,
            )
    return val


# ---------------------------------------------------------------------------
# error tables

@dataclass
class ErrorTable:
    """Per-refinement errors; rows ordered by strictly decreasing h."""

    rows: list = dc_field(default_factory=list)

    def add_row(self, h: float, tau: float, **errors):
        unknown = set(errors) - set(ERROR_COLUMNS)
        if unknown:
            raise ValueError(f"unknown error columns: {sorted(unknown)}")
        for v in errors.values():
            if v is not None and not v >= 0:
                raise ValueError(f"negative or non-finite error value {v}")
        if self.rows and not h < self.rows[-1]["h"]:
            raise ValueError("h must be strictly decreasing across rows")
        row = {"h": h, "tau": tau}
        row.update({c: errors.get(c) for c in ERROR_COLUMNS})
        self.rows.append(row)

    def column(self, name: str):
        """(h, err) pairs for one error column, skipping absent entries."""
        return [(r["h"], r[name]) for r in self.rows if r[name] is not None]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["h", "tau", *ERROR_COLUMNS])
            for r in self.rows:
                writer.writerow([
                    _fmt(r["h"]), _fmt(r["tau"]),
                    *(_fmt(r[c]) if r[c] is not None else "" for c in ERROR_COLUMNS),
                ])

    def slopes(self):
        """Per-column pairwise and least-squares EOC slopes."""
        out = {}
        for c in ERROR_COLUMNS:
            data = self.column(c)
            if len(data) >= 2:
                pairwise, ls = eoc(data)
                out[c] = {"pairwise": list(pairwise), "least_squares": ls}
        return out


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def read_error_csv(path) -> ErrorTable:
    """Read a CSV in the contract format back into an ErrorTable."""
    table = ErrorTable()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["h", "tau", *ERROR_COLUMNS]
        if reader.fieldnames != expected:
            raise ValueError(f"malformed CSV header: {reader.fieldnames}")
        for rec in reader:
            errors = {c: float(rec[c]) for c in ERROR_COLUMNS if rec[c] not in ("", None)}
            table.add_row(float(rec["h"]), float(rec["tau"]), **errors)
    return table
