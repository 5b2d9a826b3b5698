"""Experiment definitions: velocity fields, derived data, and level runners."""

import numpy as np
import pytest

from evolvefem.experiments import (
    ExperimentConfig,
    derive_ex3_data,
    ex1_velocity,
    ex2_velocity,
    ex3_exact_grad_u,
    ex3_exact_u,
    ex3_flow,
    ex3_velocity,
    run_level_diffusion,
    run_level_motion,
)


def fd_laplacian(f, pts, t, h=1e-4):
    dim = pts.shape[1]
    out = -2 * dim * f(pts, t)
    for d in range(dim):
        dp = np.zeros(dim)
        dp[d] = h
        out = out + f(pts + dp, t) + f(pts - dp, t)
    return out / h ** 2


@pytest.mark.parametrize("field,dim", [(ex1_velocity, 2), (ex2_velocity, 3)])
def test_prescribed_velocities_are_harmonic(field, dim):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.8, 0.8, size=(50, dim))
    for t in (0.0, 0.3, 1.0):
        for c in range(dim):
            comp = lambda p, tt: field(p, tt)[:, c]
            assert np.abs(fd_laplacian(comp, pts, t)).max() < 2e-5


def test_ex3_velocity_matches_radius_function():
    pts = np.array([[0.5, -0.2]])
    t = 0.7
    a = 1.0 - (1.0 + np.exp(-t)) / 2.0
    v = ex3_velocity(pts, t)
    expected = np.array([[a * 0.5 - (-0.2), a * (-0.2) + 0.5]])
    assert np.allclose(v, expected, atol=1e-14)
    # divergence 2a(t) vanishes at t = 0: pure rotation initially
    assert np.allclose(ex3_velocity(np.array([[0.3, 0.1]]), 0.0),
                       [[-0.1, 0.3]], atol=1e-15)


def test_ex3_flow_solves_the_velocity_ode():
    # finite-difference time derivative of the flow equals v(X, t)
    rng = np.random.default_rng(1)
    p0 = rng.uniform(-0.7, 0.7, size=(20, 2))
    eps = 1e-6
    for t in (0.0, 0.4, 1.0):
        dX = (ex3_flow(p0, t + eps) - ex3_flow(p0, t - eps)) / (2 * eps)
        assert np.abs(dX - ex3_velocity(ex3_flow(p0, t), t)).max() < 1e-8


def test_ex3_flow_radius_growth():
    # the domain radius grows from 1 to e^{alpha(1)}, staying in [1, 1.2]
    p0 = np.array([[1.0, 0.0]])
    assert np.allclose(ex3_flow(p0, 0.0), p0, atol=1e-15)
    r1 = np.linalg.norm(ex3_flow(p0, 1.0))
    assert 1.0 < r1 < 1.25
    assert r1 == pytest.approx(np.exp(0.5 * np.exp(-1.0)), rel=1e-14)


def test_ex3_source_satisfies_pde():
    # f = u_t + v . grad u + u div v - beta lap u, checked by finite differences
    beta = 1.3
    f_eval, _ = derive_ex3_data(beta)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.9, 0.9, size=(200, 2))
    ts = rng.uniform(0.0, 1.0, size=200)
    eps = 1e-5
    for t in np.unique(np.round(ts, 1)):
        u_t = (ex3_exact_u(pts, t + eps) - ex3_exact_u(pts, t - eps)) / (2 * eps)
        v = ex3_velocity(pts, t)
        adv = np.sum(v * ex3_exact_grad_u(pts, t), axis=1)
        div_v = 2.0 * (1.0 - 1.0 / (2.0 / (1.0 + np.exp(-t))))
        lap = fd_laplacian(ex3_exact_u, pts, t, h=1e-4)
        resid = u_t + adv + ex3_exact_u(pts, t) * div_v - beta * lap - f_eval(pts, t)
        assert np.abs(resid).max() < 1e-5


def test_ex3_boundary_datum_is_normal_derivative():
    _, g_eval = derive_ex3_data(1.0)
    rng = np.random.default_rng(3)
    theta = rng.uniform(0, 2 * np.pi, 30)
    for t in (0.0, 0.5, 1.0):
        radius = np.exp(0.5 * (t - 1.0 + np.exp(-t)))
        pts = radius * np.column_stack([np.cos(theta), np.sin(theta)])
        normals = pts / radius
        dn = np.sum(ex3_exact_grad_u(pts, t) * normals, axis=1)
        assert np.abs(dn - g_eval(pts, t)).max() < 1e-12
    assert g_eval(np.array([[1.0, 0.0]]), 0.0)[0] == pytest.approx(4.0)


def test_config_defaults_per_experiment():
    c1 = ExperimentConfig(experiment="ex1")
    assert (c1.T, c1.tau, c1.tau_ref) == (1.0, 8e-3, 2e-4)
    c2 = ExperimentConfig(experiment="ex2")
    assert (c2.T, c2.tau, c2.tau_ref) == (0.1, 1e-3, 1e-6)
    c3 = ExperimentConfig(experiment="ex3")
    assert (c3.T, c3.tau, c3.beta) == (1.0, 1e-3, 1.0)
    assert c3.tau_ref is None
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="ex9")


def test_config_level_slicing():
    c = ExperimentConfig(experiment="ex1", levels=3)
    assert len(c.h_targets()) == 3
    assert ExperimentConfig(experiment="ex2").h_targets()[0] == 0.73


@pytest.mark.slow
def test_motion_level_runner_accuracy():
    cfg = ExperimentConfig(experiment="ex1", T=0.08, tau=8e-3, tau_ref=2e-3)
    r = run_level_motion("ex1", 0.35, cfg)
    assert r["h"] <= 0.35
    assert r["errors"]["err_v_LinfH1"] < 5e-3
    assert r["stats"].max_symmetry_defect < 1e-13
    assert r["stats"].max_kernel_defect < 1e-12


@pytest.mark.slow
def test_diffusion_level_runner_accuracy():
    cfg = ExperimentConfig(experiment="ex3", T=0.05, tau=5e-3)
    r = run_level_diffusion(0.35, cfg)
    assert r["errors"]["err_u_LinfL2"] < 5e-3
    assert r["errors"]["err_u_L2H1"] < 5e-2
