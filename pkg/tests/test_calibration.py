import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from checkup_sim import fixtures
from checkup_sim.calibration import (FitConfig, FitDiverged, Parameter, ParameterVector, apply_patch, descend,
                                     fit, loss, r_squared, read_series_csv, series_loss, simulated_series,
                                     stencil_gradient, stencil_points, write_series_csv)
from checkup_sim.core import ConfigError
from checkup_sim.simulator import ScenarioConfig


def scalar(f):
    return lambda x: f(float(np.asarray(x)[0]))


# ---------------------------------------------------------------------------
# stencil gradient

def test_stencil_square():
    g = stencil_gradient(scalar(lambda x: x * x), [1.0], 0.01)
    assert abs(g[0] - 2.0) < 1e-9


def test_stencil_fourth_power():
    g = stencil_gradient(scalar(lambda x: x ** 4), [1.0], 0.01)
    assert abs(g[0] - 4.0) < 1e-5


@pytest.mark.parametrize("x", [-2.0, 0.0, 0.7, 3.0])
def test_stencil_sin(x):
    # truncation error is h^4/30 |f'''''| <= 3.4e-10 at h=0.01
    g = stencil_gradient(scalar(math.sin), [x], 0.01)
    assert abs(g[0] - math.cos(x)) < 1e-8


def test_stencil_constant_is_exactly_zero():
    g = stencil_gradient(lambda x: 3.25, np.array([0.3, -1.0, 8.0]), 0.01)
    assert np.array_equal(g, np.zeros(3))


def test_stencil_multivariate():
    f = lambda x: x[0] ** 2 * x[1] + 3 * x[1]
    g = stencil_gradient(f, np.array([1.5, -2.0]), 0.01)
    np.testing.assert_allclose(g, [2 * 1.5 * -2.0, 1.5 ** 2 + 3], atol=1e-9)


def test_stencil_shrinks_step_near_bound():
    pts, _, steps = stencil_points([0.01], 0.01, lower=[0.0], upper=[1.0])
    assert steps[0] == pytest.approx(0.005)
    assert pts[0].min() >= 0.0


def test_stencil_one_sided_on_bound():
    # a cubic is differentiated exactly by the one-sided five-point formula
    f = scalar(lambda x: x ** 3 - x)
    g_lo = stencil_gradient(f, [1.0], 0.01, lower=[1.0], upper=[5.0])
    g_hi = stencil_gradient(f, [5.0], 0.01, lower=[1.0], upper=[5.0])
    assert g_lo[0] == pytest.approx(2.0, abs=1e-9)
    assert g_hi[0] == pytest.approx(74.0, abs=1e-8)


@given(st.floats(0.0, 1.0), st.floats(0.001, 0.05))
def test_stencil_points_stay_in_bounds(x, h):
    try:
        pts, _, _ = stencil_points([x], h, lower=[0.0], upper=[1.0])
    except ValueError:
        return
    assert pts[0].min() >= 0.0 and pts[0].max() <= 1.0


def test_stencil_bounds_too_tight():
    with pytest.raises(ValueError):
        stencil_points([0.5], 0.1, lower=[0.49], upper=[0.51])


def test_stencil_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        stencil_gradient(lambda x: 0.0, [1.0], 0.0)


def test_stencil_non_finite_value_names_coordinate():
    with pytest.raises(ValueError, match="coordinate 1"):
        stencil_gradient(lambda x: 1.0 / x[1] if x[1] > 0.04 else math.nan, np.array([1.0, 0.05]), 0.01)


# ---------------------------------------------------------------------------
# loss and fit quality

def test_series_loss_hand_values():
    assert series_loss([10, 20], [12, 18]) == 4.0
    assert series_loss([1, 2, 3], [1, 2, 3]) == 0.0
    m = np.array([0.5, 0.0, 2.0])
    assert series_loss(m, np.zeros(3)) == m.sum()


def test_series_loss_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        series_loss([1, 2], [1, 2, 3])


def test_r_squared_cases():
    h = np.array([1.0, 2.0, 4.0])
    assert r_squared(h, h) == 1.0
    assert r_squared(np.full(3, h.mean()), h) == pytest.approx(0.0, abs=1e-12)
    # SS_tot = 14/3, SS_res = 1
    assert r_squared([1.0, 2.0, 3.0], h) == pytest.approx(1 - 3 / 14, abs=1e-12)
    assert math.isnan(r_squared([1.0, 2.0], [3.0, 3.0]))
    with pytest.raises(ValueError):
        r_squared([1.0], [1.0])


def test_loss_checks_history_length():
    sc = fixtures.single_group_scenario(size=20)
    with pytest.raises(ValueError, match="horizon"):
        loss(ParameterVector.per_group(sc), sc, np.zeros(sc.horizon + 1))


# ---------------------------------------------------------------------------
# descent on surrogates

@pytest.mark.parametrize("start,vertex", [(5.0, 1.3), (-4.0, 0.25), (0.0, -2.0)])
def test_descend_quadratic_reaches_vertex(start, vertex):
    eta, h = 0.1, 0.01
    f = scalar(lambda x: 2.0 * (x - vertex) ** 2)
    x, stopped, _ = descend(lambda it: f, [start], [-10.0], [10.0],
                            FitConfig(h=h, learning_rate=eta, max_iters=200))
    assert abs(x[0] - vertex) < 10 * eta * h


def test_descend_projects_onto_bounds():
    f = scalar(lambda x: (x - 3.0) ** 2)
    x, _, _ = descend(lambda it: f, [0.0], [-1.0], [1.0], FitConfig(learning_rate=0.2, max_iters=50))
    assert x[0] == 1.0


def test_descend_stops_at_target():
    seen = []
    f = scalar(lambda x: abs(x))
    x, stopped, _ = descend(lambda it: f, [0.0], [-1.0], [1.0], FitConfig(max_iters=10),
                            on_iter=lambda *a: seen.append(a))
    assert stopped == "target" and len(seen) == 1 and math.isnan(seen[0][3])


def test_descend_backtracking_is_monotone():
    A = np.array([[10.0, 0.0], [0.0, 0.1]])
    f = lambda x: float(x @ A @ x)
    values = []
    x, stopped, _ = descend(lambda it: f, [1.0, 1.0], [-5.0, -5.0], [5.0, 5.0],
                            FitConfig(learning_rate=1.0, max_iters=60, backtracking=True),
                            on_iter=lambda it, v, aux, g: values.append(v))
    assert np.all(np.diff(values) <= 0)
    assert values[-1] < values[0] * 0.5


def test_descend_backtracking_converges_on_plateau():
    # a step function: the gradient is zero almost everywhere but the line search still ends
    f = scalar(lambda x: float(np.floor(x * 3)))
    _, stopped, _ = descend(lambda it: f, [0.5], [0.0], [1.0],
                            FitConfig(h=0.01, learning_rate=1.0, max_iters=20, backtracking=True))
    assert stopped in ("converged", "max_iters")


def test_descend_divergence_raises():
    f = scalar(lambda x: x * x)
    with pytest.raises(FitDiverged):
        descend(lambda it: f, [1.0], [-1e9], [1e9], FitConfig(learning_rate=2.0, max_iters=50))


def test_fit_config_validation():
    with pytest.raises(ConfigError):
        FitConfig(h=0.0)
    with pytest.raises(ConfigError):
        FitConfig(learning_rate=-1.0)
    with pytest.raises(ConfigError):
        FitConfig(replicates=0)


def test_fresh_seeds_change_per_iteration():
    assert FitConfig(replicates=2).seeds(3) == FitConfig(replicates=2).seeds(0)
    assert FitConfig(replicates=2, fresh_seeds=True).seeds(3) != FitConfig(replicates=2, fresh_seeds=True).seeds(0)


# ---------------------------------------------------------------------------
# parameters on scenarios

def test_parameter_validation():
    with pytest.raises(ConfigError, match="cannot calibrate"):
        Parameter("x", "psi_i", (0,), 0.1, 0.0, 1.0)
    with pytest.raises(ConfigError, match="lower bound"):
        Parameter("x", "mu_mean", (0,), 0.1, 1.0, 0.0)
    with pytest.raises(ConfigError):
        ParameterVector([])


def test_apply_touches_only_named_groups():
    sc = fixtures.calibration_scenario(size=50)
    pv = ParameterVector.per_group(sc)
    groups = np.flatnonzero(sc.init.counts > 0)
    assert len(pv) == 2 * len(groups)
    x = pv.values.copy()
    x[0] = 0.9
    new = pv.apply(sc, x)
    assert new.init.mu_mean[groups[0]] == 0.9
    assert sc.init.mu_mean[groups[0]] != 0.9
    other = np.setdiff1d(np.arange(140), [groups[0]])
    assert np.array_equal(new.init.mu_mean[other], sc.init.mu_mean[other])
    assert np.array_equal(new.init.rho_mean, sc.init.rho_mean)


def test_apply_projects_out_of_bounds_values():
    sc = fixtures.calibration_scenario(size=50)
    pv = ParameterVector.per_group(sc, fields=("mu_mean",))
    new = pv.apply(sc, np.full(len(pv), 7.0))
    assert np.all(new.init.mu_mean[sc.init.counts > 0] == 1.0)


def test_scenario_patch_round_trip():
    sc = fixtures.calibration_scenario(size=50)
    pv = ParameterVector.per_group(sc)
    fitted = pv.with_values(pv.values * 0.5)
    patched = ScenarioConfig.from_json(apply_patch(sc.to_json(), fitted.scenario_patch()))
    direct = fitted.apply(sc)
    np.testing.assert_array_equal(patched.init.mu_mean, direct.init.mu_mean)
    np.testing.assert_array_equal(patched.init.rho_mean, direct.init.rho_mean)


# ---------------------------------------------------------------------------
# fit on small scenarios

def test_fit_at_truth_with_history_seeds_hits_zero_loss():
    sc = fixtures.calibration_scenario(size=1000, horizon=40)
    hist = simulated_series(sc, [5])
    assert hist.std() > 0
    res = fit(sc, hist, FitConfig(seed=5, replicates=1, max_iters=10))
    assert res.stopped == "target"
    assert res.trace.loss == [0.0]
    assert res.trace.r2[0] == 1.0


def test_fit_reduces_loss_from_perturbed_start():
    sc = fixtures.calibration_scenario(size=1000, horizon=100)
    hist = simulated_series(sc, [9])
    pv = ParameterVector.per_group(sc)
    start = pv.with_values(np.where(np.arange(len(pv)) < len(pv) // 2, 0.05, 0.1))
    res = fit(sc, hist, FitConfig(seed=1, replicates=1, max_iters=3, learning_rate=1.0, backtracking=True,
                                  workers=1), params=start)
    assert np.all(np.diff(res.trace.loss) <= 0)
    assert res.trace.loss[-1] < res.trace.loss[0]
    assert len(res.final_series) == sc.horizon
    js = res.to_json()
    assert js["stopped"] == res.stopped and len(js["parameters"]) == len(pv)


def test_fit_checks_history_length():
    sc = fixtures.single_group_scenario(size=20)
    with pytest.raises(ValueError, match="horizon"):
        fit(sc, np.zeros(3))


# ---------------------------------------------------------------------------
# I/O

def test_series_csv_round_trip(tmp_path):
    s = np.array([0.0, 1e-5, 3.25e-4])
    write_series_csv(tmp_path / "h.csv", s, t0=10)
    np.testing.assert_array_equal(read_series_csv(tmp_path / "h.csv"), s)


def test_series_csv_is_sorted_and_contiguous(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("round,mortality\n2,0.3\n0,0.1\n1,0.2\n")
    np.testing.assert_array_equal(read_series_csv(p), [0.1, 0.2, 0.3])
    p.write_text("round,mortality\n0,0.1\n2,0.3\n")
    with pytest.raises(ConfigError, match="contiguous"):
        read_series_csv(p)
    p.write_text("round,mortality\n0,abc\n")
    with pytest.raises(ConfigError, match="line 2"):
        read_series_csv(p)
