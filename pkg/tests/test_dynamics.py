import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eoklab.continuation import ConvergenceError
from eoklab.core import Grid, ModelParams, ScalarField, State, l2_norm, mass, solution_norm
from eoklab.dynamics import (FDStepper, IntegratorConfig, SpectralStepper, StepRejected, integrate,
                             monotone_dt_1d, noise, stabilization, step_1d, step_2d,
                             uniform_snapshots)
from eoklab.energy import free_energy, periodic_branch
from eoklab.poisson import solve_state


def _state(grid, u, params, method=None):
    return solve_state(ScalarField(grid, u), params, "mean-zero", method=method)


def test_config_validation():
    with pytest.raises(ValueError, match="dt"):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError, match="sorted"):
        IntegratorConfig(t_end=2.0, snapshot_times=(1.0, 0.5))
    with pytest.raises(ValueError, match="scheme"):
        IntegratorConfig(scheme="rk4")


def test_noise_is_seeded_zero_mean_and_bounded():
    g = Grid.rect(10.0, 5.0, 33, 17)
    a, b = noise(g, 1e-3, 7), noise(g, 1e-3, 7)
    assert np.array_equal(a, b)
    assert abs(g.integrate(a)) < 1e-15
    assert np.max(np.abs(a)) <= 2e-3


def test_uniform_state_is_fixed_1d_and_2d():
    p = ModelParams(gamma=0.05, m=0.4, a=0.1)
    g1 = Grid.line(10.0, 65)
    s1 = State.from_arrays(g1, np.zeros(65), np.zeros(65))
    assert np.all(step_1d(s1, p, IntegratorConfig(dt=0.1)).u.values == 0)
    g2 = Grid.rect(10.0, 8.0, 33, 17)
    s2 = State.from_arrays(g2, np.zeros(g2.shape), np.zeros(g2.shape))
    out = step_2d(s2, p, IntegratorConfig(dt=0.1, scheme="spectral-2d"))
    assert np.all(out.u.values == 0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.sampled_from([0.0, 0.1]), amp=st.floats(0.05, 0.4))
def test_fd_mass_conserved_and_energy_decreasing(seed, a, amp):
    p = ModelParams(gamma=0.1, m=0.2, a=a)
    g = Grid.line(12.0, 97)
    s = _state(g, noise(g, amp, seed), p)
    cfg = IntegratorConfig(dt=min(0.05, 0.5 * monotone_dt_1d(p)), t_end=2.0,
                           snapshot_times=uniform_snapshots(2.0, 20))
    tr = integrate(s, p, cfg)
    assert tr.mass_drift() <= 1e-10
    if a == 0:
        assert tr.energy_increases(1e-12).size == 0


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.sampled_from([0.0, 0.3, 0.5]))
def test_eyre_step_energy_non_increasing(seed, m):
    p = ModelParams(gamma=0.03, m=m)
    g = Grid.rect(12.0, 12.0, 32, 32)
    s = _state(g, noise(g, 0.3, seed), p, method="spectral")
    stepper = SpectralStepper(g, p)
    e_prev = free_energy(s, p).total
    m0 = mass(s)
    for _ in range(40):
        s = stepper.step(s, 0.5)
        e = free_energy(s, p).total
        assert e <= e_prev + 1e-12
        e_prev = e
    assert abs(mass(s) - m0) <= 1e-10


@given(m=st.floats(-0.55, 0.55), tau=st.floats(-0.3, 0.3), u=st.floats(-1.2, 1.2))
def test_stabilization_dominates_nonlinearity(m, tau, u):
    p = ModelParams(m=m, tau=tau)
    v = u - m  # translated variable with |u + m| <= 1.2
    assert stabilization(p) >= 3 * v**2 + 2 * p.quad * v - 1e-12
    assert stabilization(p) >= p.eta


def test_newton_failure_reports_history():
    p = ModelParams(gamma=0.1, m=0.2)
    g = Grid.line(12.0, 65)
    s = _state(g, noise(g, 0.3, 1), p)
    stepper = FDStepper(g, p, tol=1e-30, max_iter=2)
    with pytest.raises(ConvergenceError) as info:
        stepper.step(s, 0.05)
    assert len(info.value.history) >= 2


def test_bound_violation_rejected_after_retries():
    p = ModelParams(gamma=0.03)
    g = Grid.rect(8.0, 8.0, 17, 17)
    u = np.zeros(g.shape)
    u[8, 8] = 40.0
    s = _state(g, u - g.integrate(u) / g.volume, p, method="spectral")
    cfg = IntegratorConfig(dt=0.1, t_end=0.1, scheme="spectral-2d", max_halvings=1)
    with pytest.raises(StepRejected):
        integrate(s, p, cfg)


def _periodic_state(params, period, n=65):
    br = periodic_branch(params, period, n=n, stop_negative=False, max_steps=60)
    pt = max(br.points, key=lambda q: np.max(np.abs(q.state.u.values)))
    return pt.state, params.with_(gamma=pt.value)


def test_continuation_state_is_fixed_point_of_fd_stepper():
    base = ModelParams(m=0.4)
    state, p = _periodic_state(base, 3.2)
    tr = integrate(state, p, IntegratorConfig(dt=0.01, t_end=1.0))
    assert tr.steps == 100
    assert abs(solution_norm(tr.final) - solution_norm(state)) < 1e-8
    assert l2_norm(tr.final.u.values - state.u.values, state.grid) < 1e-8


def test_refinement_consistency_first_order_in_time():
    """Halving dt and h together: successive differences shrink at the backward Euler rate.

    gamma is above onset so the trajectory is a smooth relaxation.
    """
    p = ModelParams(gamma=0.3, m=0.2, a=0.1)
    L = 10.0
    finals = []
    for level in range(3):
        n = 32 * 2**level + 1
        g = Grid.line(L, n)
        u = 0.2 * np.cos(2 * np.pi * g.x / L) + 0.1 * np.cos(3 * np.pi * g.x / L)
        s = _state(g, u - g.integrate(u) / L, p)
        tr = integrate(s, p, IntegratorConfig(dt=0.2 / 2**level, t_end=2.0))
        finals.append(l2_norm(tr.final.u.values, g))
    d1, d2 = abs(finals[0] - finals[1]), abs(finals[1] - finals[2])
    assert d2 < d1
    assert 1.5 < d1 / d2 < 4.5


def test_snapshot_schedule_and_series():
    p = ModelParams(gamma=0.1, m=0.2)
    g = Grid.line(12.0, 65)
    s = _state(g, noise(g, 0.2, 3), p)
    cfg = IntegratorConfig(dt=0.03, t_end=1.0, snapshot_times=(0.0, 0.1, 0.5, 1.0))
    tr = integrate(s, p, cfg)
    assert np.allclose(tr.times, [0.0, 0.1, 0.5, 1.0])
    assert len(tr.snapshots) == 4 == tr.energy.size == tr.mass.size == tr.norm.size
