import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlav.model import (DomainError, LaneSpec, RiemannQuery, SourceCoupling, demand, flux, godunov_flux, hat_rho,
                        lane_change_source, riemann_eval, supply, velocity)

LANE = LaneSpec(2.0, 1.0)
unit = st.floats(0.0, 1.0)


@pytest.mark.parametrize("rho, expected", [(0.0, 2.0), (1.0, 0.0), (0.6, 0.8)])
def test_velocity(rho, expected):
    assert velocity(LANE, rho) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("rho, expected", [(0.5, 0.5), (0.0, 0.0), (0.3, 0.42)])
def test_flux(rho, expected):
    assert flux(LANE, rho) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("u, expected", [(1.0, 0.5), (0.0, 1.0), (2.0, 0.0)])
def test_hat_rho(u, expected):
    assert hat_rho(LANE, u) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("rho, d, s", [(0.8, 0.5, 0.32), (0.3, 0.42, 0.5), (0.0, 0.0, 0.5), (1.0, 0.5, 0.0)])
def test_demand_supply(rho, d, s):
    assert demand(LANE, rho) == pytest.approx(d, abs=1e-15)
    assert supply(LANE, rho) == pytest.approx(s, abs=1e-15)


@pytest.mark.parametrize("left, right, expected", [(0.3, 0.8, 0.32), (0.8, 0.3, 0.5), (0.0, 0.7, 0.0)])
def test_godunov_flux(left, right, expected):
    assert godunov_flux(LANE, left, right) == pytest.approx(expected, abs=1e-15)


def test_lane_spec_derived():
    assert LANE.theta == 0.5
    assert LANE.Fmax == 0.5
    assert LANE.flux(LANE.theta) == LANE.Fmax


@pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
def test_domain_errors(bad):
    for fn in (velocity, flux, demand, supply):
        with pytest.raises(DomainError):
            fn(LANE, bad)
    with pytest.raises(DomainError):
        godunov_flux(LANE, 0.5, bad)


def test_hat_rho_rejects_speed_above_free_flow():
    with pytest.raises(DomainError):
        hat_rho(LANE, 2.5)


def test_invalid_lane():
    with pytest.raises(DomainError):
        LaneSpec(0.0, 1.0)


def test_riemann_examples():
    # shock speed (0.32 - 0.18) / (0.2 - 0.9) = -0.2 < 0
    assert riemann_eval(RiemannQuery(0.2, 0.9, 0.0), LANE) == 0.9
    # F'(rho) = 2 - 4 rho = 0
    assert riemann_eval(RiemannQuery(0.9, 0.2, 0.0), LANE) == pytest.approx(0.5)
    for xi in (-3.0, 0.0, 0.7):
        assert riemann_eval(RiemannQuery(0.4, 0.4, xi), LANE) == 0.4


def test_riemann_tie_returns_right_state():
    s = (LANE.flux(0.2) - LANE.flux(0.9)) / (0.2 - 0.9)
    assert riemann_eval(RiemannQuery(0.2, 0.9, s), LANE) == 0.9


def test_riemann_rarefaction_edges():
    # fan between F'(0.9) = -1.6 and F'(0.2) = 1.2
    assert riemann_eval(RiemannQuery(0.9, 0.2, -2.0), LANE) == 0.9
    assert riemann_eval(RiemannQuery(0.9, 0.2, 1.5), LANE) == 0.2
    inside = riemann_eval(RiemannQuery(0.9, 0.2, 0.4), LANE)
    assert LANE.dflux(inside) == pytest.approx(0.4)


@given(unit)
def test_min_demand_supply_is_flux(rho):
    assert min(demand(LANE, rho), supply(LANE, rho)) == pytest.approx(flux(LANE, rho), abs=1e-15)


def test_godunov_matches_riemann_flux_on_grid():
    grid = np.round(np.arange(0, 101) * 0.01, 12)
    L, R = np.meshgrid(grid, grid, indexing="ij")
    gd = LANE.godunov(L, R)
    oracle = LANE.flux(LANE.riemann(L, R, 0.0))
    assert np.max(np.abs(gd - oracle)) <= 1e-12


@given(unit, unit, unit)
def test_godunov_monotone(a, b, c):
    lo, hi = sorted((a, b))
    assert godunov_flux(LANE, lo, c) <= godunov_flux(LANE, hi, c) + 1e-15
    assert godunov_flux(LANE, c, lo) >= godunov_flux(LANE, c, hi) - 1e-15


@given(unit)
def test_hat_rho_inverts_velocity(rho):
    assert hat_rho(LANE, velocity(LANE, rho)) == pytest.approx(rho, abs=1e-12)


@given(st.floats(0.0, 2.0))
def test_velocity_inverts_hat_rho(u):
    assert velocity(LANE, hat_rho(LANE, u)) == pytest.approx(u, abs=1e-12)


# --- lane-changing source -------------------------------------------------

TWO = SourceCoupling((LANE, LANE))


@pytest.mark.parametrize("a, b, expected", [(0.8, 0.2, 0.96), (0.2, 0.8, -0.96), (0.5, 0.5, 0.0)])
def test_lane_change_source_examples(a, b, expected):
    assert lane_change_source(TWO, 0, a, b) == pytest.approx(expected, abs=1e-15)


def test_lane_change_source_index():
    with pytest.raises(IndexError):
        lane_change_source(TWO, 1, 0.1, 0.1)
    with pytest.raises(IndexError):
        lane_change_source(TWO, -1, 0.1, 0.1)


def test_lipschitz_default():
    three = SourceCoupling((LaneSpec(50, 1), LaneSpec(80, 1), LaneSpec(100, 1)))
    assert three.lipschitz_bound == 200.0
    assert SourceCoupling((LANE,), lipschitz_bound=7.0).lipschitz_bound == 7.0


def _lipschitz_estimate(coupling, j, n=201):
    a = np.linspace(0, coupling.lane_specs[j].R, n)
    b = np.linspace(0, coupling.lane_specs[j + 1].R, n)
    A, B = np.meshgrid(a, b, indexing="ij")
    S = coupling.exchange(j, A, B)
    d1 = np.abs(np.diff(S, axis=0)) / (a[1] - a[0])
    d2 = np.abs(np.diff(S, axis=1)) / (b[1] - b[0])
    return max(d1.max(), d2.max())


@pytest.mark.parametrize("lanes", [
    (LaneSpec(2, 1), LaneSpec(2, 1)),
    (LaneSpec(50, 1), LaneSpec(80, 1), LaneSpec(100, 1)),
    (LaneSpec(1, 0.5), LaneSpec(3, 2)),
])
def test_lipschitz_default_bounds_finite_differences(lanes):
    cp = SourceCoupling(lanes)
    for j in range(len(lanes) - 1):
        assert _lipschitz_estimate(cp, j) <= cp.lipschitz_bound


@pytest.mark.parametrize("lanes", [
    (LaneSpec(2, 1), LaneSpec(2, 1)),
    (LaneSpec(50, 1), LaneSpec(80, 1), LaneSpec(100, 1)),
    (LaneSpec(1, 0.5), LaneSpec(3, 2)),
])
def test_source_hypotheses(lanes):
    cp = SourceCoupling(lanes)
    for j in range(len(lanes) - 1):
        Rj, Rk = lanes[j].R, lanes[j + 1].R
        assert cp.exchange(j, 0.0, 0.0) == 0.0
        assert cp.exchange(j, Rj, Rk) == 0.0
        a = np.round(np.arange(0, 101) * 0.01, 12) * Rj
        b = np.round(np.arange(0, 101) * 0.01, 12) * Rk
        S = cp.exchange(j, a[:, None], b[None, :])
        assert np.all(np.diff(S, axis=0) >= -1e-14)  # nondecreasing in own density
        assert np.all(np.diff(S, axis=1) <= 1e-14)  # nonincreasing in neighbour density


@given(unit, unit)
def test_equal_laws_balance_at_equal_densities(a, b):
    assert TWO.exchange(0, a, a) == 0.0
    if TWO.exchange(0, a, b) == 0.0:
        assert a == pytest.approx(b, abs=1e-12) or a == b


@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_sign_follows_speed_difference(a, b):
    cp = SourceCoupling((LaneSpec(2, 1), LaneSpec(3, 1)))
    dv = cp.lane_specs[1].velocity(b) - cp.lane_specs[0].velocity(a)
    assert np.sign(cp.exchange(0, a, b)) == np.sign(dv)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_net_source_telescopes(values):
    cp = SourceCoupling((LaneSpec(50, 1), LaneSpec(80, 1), LaneSpec(100, 1)))
    rho = np.array(values)[:, None]
    assert abs(cp.net_source(rho).sum()) <= 1e-12
