import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eoklab.continuation import (Controls, NoSnakingError, SteadyProblem, check_jacobian,
                                 count_peaks, half, localized_branch, mirror, newton,
                                 nu_spread, snaking_region)
from eoklab.core import Grid, ModelParams


def _random_y(problem, rng, amp=0.4):
    n = problem.n
    u = amp * rng.normal(size=n)
    u -= problem.grid.integrate(u) / problem.grid.volume
    return np.concatenate([u, 0.1 * rng.normal(size=n), [rng.normal()]])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(-0.3, 0.3), m=st.floats(-0.4, 0.4),
       gauge=st.sampled_from(["pinned-at-midpoint", "mean-zero", "pinned-at-end"]))
def test_jacobian_matches_finite_differences(seed, a, m, gauge):
    p = ModelParams(gamma=0.07, m=m, a=a, tau=0.1)
    prob = SteadyProblem(p, Grid.line(9.0, 49), gauge=gauge)
    y = _random_y(prob, np.random.default_rng(seed))
    assert check_jacobian(prob, y, trials=5, rng=np.random.default_rng(seed)) < 1e-6


def test_newton_solution_has_constant_chemical_potential():
    p = ModelParams(gamma=0.05, m=0.2, a=0.1)
    g = Grid.line(2 * np.pi / 1.6, 65)
    prob = SteadyProblem(p, g)
    y0 = prob.seed(0.6 * np.cos(1.6 * g.x))
    y, _ = newton(prob, y0)
    assert np.max(np.abs(prob.residual(y))) < 1e-10
    assert nu_spread(prob, y) < 1e-9
    assert abs(g.integrate(prob.split(y)[0])) < 1e-12


def test_mirror_and_half_are_inverse():
    v = np.arange(9.0)
    assert np.array_equal(half(mirror(v)), v)
    full = mirror(v)
    assert np.array_equal(full, full[::-1])
    with pytest.raises(ValueError):
        half(np.arange(4.0))


@given(st.lists(st.booleans(), min_size=1, max_size=60))
def test_count_peaks_counts_runs(bits):
    u = np.where(bits, 1.0, 0.0)
    runs = sum(1 for i, b in enumerate(bits) if b and (i == 0 or not bits[i - 1]))
    assert count_peaks(u) == runs


def test_supercritical_parameters_raise():
    with pytest.raises(NoSnakingError):
        snaking_region(ModelParams(m=0.0))


def test_branch_states_are_even_and_converged(short_branch):
    assert len(short_branch.folds) >= 6
    prob = short_branch.problem
    for pt in short_branch.points[::25]:
        u = pt.state.u.values
        assert np.allclose(u, u[::-1], atol=1e-13)
        assert np.max(np.abs(prob.with_value(pt.value).residual(pt.y))) < 1e-9


def test_peaks_grow_by_two_per_cycle(short_branch):
    # the first two folds belong to the onset transient
    peaks = [f.peaks for f in short_branch.folds]
    assert all(b >= a for a, b in zip(peaks, peaks[1:]))
    assert all(peaks[i + 2] - peaks[i] == 2 for i in range(2, len(peaks) - 2))


def test_folds_reproducible_under_halved_step(short_branch):
    """Fold locations are refined by bisection, so they do not depend on ds."""
    p = ModelParams(m=0.4)

    def enough(br):
        return "fold-limit" if len(br.folds) >= 2 else None

    other = localized_branch(p, 0.0, None, 513, Controls(ds=0.01, ds_max=0.15, max_steps=3000,
                                                         stop=enough))
    ref = short_branch.fold_values()[:2]
    assert np.allclose(other.fold_values()[:2], ref, atol=1e-6)
