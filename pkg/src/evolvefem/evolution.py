"""Linearly implicit BDF time stepping for the coupled motion/diffusion system,
plus RK4 reference trajectories for experiments with an analytic velocity field.

One step of the coupled scheme:
  1. extrapolate positions from the history,
  2. solve the harmonic extension on the extrapolated geometry for v^n,
  3. BDF position update x^n,
  4. (if diffusion active) solve the linearly implicit BDF system for u^n
     on the already-updated geometry x^n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .assembly import assemble_load, assemble_mass, assemble_stiffness
from .harmonic import solve_harmonic_extension, trace_boundary_velocity
from .linsolve import factorize
from .mesh import MeshTopology, node_coordinates, positions_from_coordinates


def bdf_coefficients(q: int):
    """BDF-q backward-difference coefficients (delta_0..delta_q) and
    order-q extrapolation coefficients (gamma_0..gamma_{q-1}).

    delta from the generating polynomial sum_{l=1..q} (1/l) (1 - z)^l;
    gamma_j = (-1)^j C(q, j+1) extrapolates degree-(q-1) polynomials
    exactly one step forward.
    """
    if not 1 <= q <= 4:
        raise ValueError(f"BDF order q = {q} out of supported range 1..4")
    delta = [Fraction(0)] * (q + 1)
    for ell in range(1, q + 1):
        # (1 - z)^ell expanded: sum_j C(ell, j) (-z)^j
        for j in range(ell + 1):
            delta[j] += Fraction(1, ell) * Fraction((-1) ** j * _binom(ell, j))
    gamma = [Fraction((-1) ** j * _binom(q, j + 1)) for j in range(q)]
    return np.array([float(d) for d in delta]), np.array([float(g) for g in gamma])


def _binom(n, k):
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out


@dataclass
class BdfHistory:
    """Ring buffer of the last q states, newest first.

    xs[j] is the position vector at t_{n-1-j}; us and mass matrices are
    kept only when a diffusion equation is being solved.
    """

    q: int
    tau: float
    xs: list = field(default_factory=list)
    us: list = field(default_factory=list)
    Ms: list = field(default_factory=list)
    n_steps: int = 0  # index of the newest stored state
    delta: np.ndarray = None
    gamma: np.ndarray = None

    def __post_init__(self):
        self.delta, self.gamma = bdf_coefficients(self.q)

    @property
    def t(self) -> float:
        """Time of the newest stored state."""
        return self.n_steps * self.tau

    def push(self, x, u=None, M=None):
        self.xs.insert(0, x)
        del self.xs[self.q:]
        if u is not None:
            self.us.insert(0, u)
            del self.us[self.q:]
        if M is not None:
            self.Ms.insert(0, M)
            del self.Ms[self.q:]
        self.n_steps += 1

    def extrapolate_positions(self) -> np.ndarray:
        return sum(g * xj for g, xj in zip(self.gamma, self.xs))


def startup(topology: MeshTopology, q: int, tau: float, position_at,
            u_nodal_at=None) -> BdfHistory:
    """History initialized with exact data at t_0 .. t_{q-1}.

    `position_at(t)` returns the exact/reference flat position vector;
    `u_nodal_at(coords, t)` the exact solution at an (N, dim) coordinate
    array (omit when no diffusion equation is solved).
    """
    hist = BdfHistory(q=q, tau=tau)
    hist.n_steps = -1
    for j in range(q):
        t = j * tau
        x = position_at(t)
        u = M = None
        if u_nodal_at is not None:
            u = u_nodal_at(node_coordinates(topology, x), t)
            M = assemble_mass(topology, x)
        hist.push(x, u, M)
    hist.n_steps = q - 1
    return hist


def bdf_position_step(history: BdfHistory, topology: MeshTopology, v_gamma_field):
    """Advance positions one step; returns (x_n, v_n).

    The harmonic extension is solved on the extrapolated geometry with
    boundary data evaluated at the extrapolated boundary positions.
    """
    t_n = (history.n_steps + 1) * history.tau
    x_tilde = history.extrapolate_positions()
    vg = trace_boundary_velocity(v_gamma_field, topology, x_tilde, t_n)
    v_n = solve_harmonic_extension(topology, x_tilde, vg)
    d = history.delta
    acc = sum(dj * xj for dj, xj in zip(d[1:], history.xs))
    x_n = (history.tau * v_n - acc) / d[0]
    return x_n, v_n


def bdf_diffusion_step(history: BdfHistory, topology: MeshTopology, x_n,
                       f_eval, g_eval, beta: float = 1.0):
    """Linearly implicit BDF step for the diffusion equation on geometry x_n.

    Solves (delta_0/tau) M(x_n) u_n + beta A(x_n) u_n =
    b(x_n, t_n) - (1/tau) sum_j delta_j M(x^{n-j}) u^{n-j}; the
    historical mass matrices are taken from the ring buffer.
    """
    t_n = (history.n_steps + 1) * history.tau
    tau = history.tau
    d = history.delta
    M_n = assemble_mass(topology, x_n)
    A_n = assemble_stiffness(topology, x_n)
    b = assemble_load(topology, x_n, f_eval, g_eval, t_n, beta)
    rhs = b - sum(dj * (Mj @ uj) for dj, Mj, uj in zip(d[1:], history.Ms, history.us)) / tau
    K = (d[0] / tau) * M_n + beta * A_n
    solver = factorize(K.tocsc(), role="BDF diffusion step")
    u_n = solver.solve(rhs)
    return u_n, M_n, A_n


@dataclass
class Trajectory:
    """Uniform-grid time series of nodal position (and optional u, v) vectors."""

    tau: float
    times: np.ndarray
    positions: list
    velocities: list = None
    solutions: list = None

    def position_at(self, t: float) -> np.ndarray:
        m = int(round(t / self.tau))
        if abs(m * self.tau - t) > 1e-12 or not 0 <= m < len(self.positions):
            raise ValueError(f"time {t} not on the stored grid")
        return self.positions[m]


def rk4_reference_positions(topology: MeshTopology, x0: np.ndarray, v_eval,
                            tau_ref: float, T: float, stride: int = 1) -> Trajectory:
    """Classical RK4 applied nodewise to dx/dt = v(x, t).

    `v_eval(points, t)` maps (N, dim) coordinates to (N, dim) velocities.
    Positions are recorded every `stride` internal steps.
    """
    n_steps = int(round(T / tau_ref))
    if abs(n_steps * tau_ref - T) > 1e-10 * max(1.0, T):
        raise ValueError("T must be a multiple of tau_ref")
    if n_steps % stride != 0:
        raise ValueError("stride must divide the number of steps")
    y = node_coordinates(topology, x0).copy()
    positions = [positions_from_coordinates(y)]
    times = [0.0]
    t = 0.0
    for m in range(1, n_steps + 1):
        k1 = _eval_vel(v_eval, y, t)
        k2 = _eval_vel(v_eval, y + 0.5 * tau_ref * k1, t + 0.5 * tau_ref)
        k3 = _eval_vel(v_eval, y + 0.5 * tau_ref * k2, t + 0.5 * tau_ref)
        k4 = _eval_vel(v_eval, y + tau_ref * k3, t + tau_ref)
        y = y + (tau_ref / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = m * tau_ref
        if m % stride == 0:
            positions.append(positions_from_coordinates(y))
            times.append(t)
    return Trajectory(tau=tau_ref * stride, times=np.array(times), positions=positions)


def _eval_vel(v_eval, pts, t):
    v = np.asarray(v_eval(pts, t), dtype=float)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite velocity evaluation at t = {t}")
    return v
