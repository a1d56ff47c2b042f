import math

import numpy as np
import pytest

from conftest import UNIT
from mlav.analysis import total_variation
from mlav.model import DomainError
from mlav.multilane import GridSpec
from mlav.scalar import LimitSpec, flux_limiter, mb_bottleneck, mb_traces, run_limit_lwr, run_mb

TWO = LimitSpec(2, UNIT)  # f(r) = 2r - r^2


def grid_search_limiter(spec, u, step=1e-4):
    r = np.arange(0.0, spec.R_total / 2 + step / 2, step)
    return np.max(0.5 * spec.f(2 * r) - r * u)


def test_aggregate_flux():
    r = np.linspace(0, 2, 21)
    np.testing.assert_allclose(TWO.f(r), 2 * r - r ** 2, atol=1e-15)
    np.testing.assert_allclose(TWO.tilde_v(r), UNIT.velocity(r / 2), atol=1e-15)


def test_limiter_value():
    assert flux_limiter(TWO, 1.0) == pytest.approx(0.125, abs=1e-15)
    assert grid_search_limiter(TWO, 1.0) == pytest.approx(0.125, abs=1e-8)


def test_limiter_edges():
    assert flux_limiter(TWO, UNIT.V) == 0.0
    assert flux_limiter(TWO, 0.0) == pytest.approx(0.5 * TWO.f(1.0), abs=1e-12)
    assert flux_limiter(TWO, 0.0) == pytest.approx(grid_search_limiter(TWO, 0.0), abs=1e-8)


@pytest.mark.parametrize("u", [-0.1, 2.1])
def test_limiter_domain(u):
    with pytest.raises(DomainError):
        flux_limiter(TWO, u)


@pytest.mark.parametrize("spec", [TWO, LimitSpec(3, UNIT), LimitSpec(2, type(UNIT)(80.0, 1.0))])
def test_limiter_matches_grid_search(spec):
    for u in np.linspace(0, spec.base.V, 9):
        assert flux_limiter(spec, u, check=False) == pytest.approx(grid_search_limiter(spec, u, spec.base.R * 1e-4),
                                                                   abs=1e-7 * spec.base.V)


def test_traces():
    tr = mb_traces(TWO, 1.0)
    assert tr.r_check == pytest.approx((1 - math.sqrt(0.5)) / 2, abs=1e-12)
    assert tr.r_hat == pytest.approx((1 + math.sqrt(0.5)) / 2, abs=1e-12)
    assert tr.rho_star == 0.5 and tr.r_star == 1.0
    for r in (tr.r_check, tr.r_hat):
        assert abs(TWO.f(r) - tr.u * r - tr.f_alpha) < 1e-12


@pytest.mark.parametrize("u", [0.1, 0.5, 1.0, 1.7])
def test_traces_bracket_limiter_argmax(u):
    tr = mb_traces(TWO, u)
    # argmax of f(r) - u r over the road
    argmax = TWO.R_total * (TWO.base.V - u) / (2 * TWO.base.V)
    assert tr.r_check < argmax < tr.r_hat


@pytest.mark.parametrize("u", [0.0, 2.0])
def test_traces_domain(u):
    with pytest.raises(DomainError):
        mb_traces(TWO, u)


def test_limiter_inequality_grid():
    k = np.round(np.arange(0, 201) * 0.01, 12)
    for u in np.round(np.arange(0, 101) * 0.02, 12):
        fa = flux_limiter(TWO, float(u), check=False)
        lhs = 2 * np.maximum(TWO.f(k) - k * u - fa, 0)
        rhs = np.maximum(TWO.f(k) - k * u, 0)
        assert np.all(lhs <= rhs + 1e-12)


def test_limit_lwr_constant():
    grid = GridSpec(0.0, 1.0, 50)
    result = run_limit_lwr(np.full(50, 0.7), grid, TWO, 0.3)
    np.testing.assert_array_equal(result.final.rho[0], np.full(50, 0.7))


def test_limit_lwr_shock_speed():
    # with a concave flux the entropy shock has the denser state downstream
    grid = GridSpec(-1.0, 1.0, 400)
    r0 = np.where(grid.centers < 0, 0.3, 1.5)
    t = 0.4
    result = run_limit_lwr(r0, grid, TWO, t)
    s = (TWO.f(1.5) - TWO.f(0.3)) / 1.2
    jump = grid.x_min + grid.dx * (1 + np.argmax(np.abs(np.diff(result.final.rho[0]))))
    assert jump == pytest.approx(s * t, abs=2 * grid.dx)
    width = np.count_nonzero((result.final.rho[0] > 0.31) & (result.final.rho[0] < 1.49))
    assert width <= 4


def test_reversed_datum_is_a_fan():
    grid = GridSpec(-1.0, 1.0, 400)
    r0 = np.where(grid.centers < 0, 1.5, 0.3)
    result = run_limit_lwr(r0, grid, TWO, 0.4)
    spread = np.count_nonzero((result.final.rho[0] > 0.35) & (result.final.rho[0] < 1.45))
    assert spread * grid.dx > 0.4


def test_limit_lwr_total_variation_does_not_grow():
    grid = GridSpec(0.0, 4.0, 200, "periodic")
    rng = np.random.default_rng(11)
    r0 = rng.uniform(0, 2, 200)
    result = run_limit_lwr(r0, grid, TWO, 0.5, observers=np.linspace(0, 0.5, 11))
    tv0 = total_variation(r0)
    for s in result.samples:
        assert total_variation(s.rho[0]) <= tv0 + 1e-12


def test_run_mb_free_flow_is_plain_lwr():
    grid = GridSpec(0.0, 4.0, 200)
    r0 = 0.6 + 0.3 * np.sin(np.pi * grid.centers)
    plain = run_limit_lwr(r0, grid, TWO, 0.5)
    with_av = run_mb(r0, grid, TWO, 2.0, 1.0, 0.5)
    np.testing.assert_array_equal(plain.final.rho, with_av.final.rho)


def test_run_mb_periodic_mass():
    grid = GridSpec(0.0, 4.0, 400, "periodic")
    r0 = np.full(400, 0.6)
    result = run_mb(r0, grid, TWO, 1.0, 1.0, 1.0)
    assert any(d.av_events for d in result.diagnostics)
    assert abs(result.final.rho.sum() - r0.sum()) / r0.sum() <= 1e-12


def test_run_mb_right_flux_bounded():
    grid = GridSpec(0.0, 4.0, 400)
    result = run_mb(np.full(400, 0.6), grid, TWO, 1.0, 1.0, 0.5)
    bound = TWO.f(mb_traces(TWO, 1.0).r_hat)
    events = [e for d in result.diagnostics for e in d.av_events]
    assert events
    assert max(e.right_flux for e in events) <= bound + 1e-15


def test_bottleneck_states():
    bn = mb_bottleneck(TWO, 1.0)
    tr = mb_traces(TWO, 1.0)
    assert (bn.upper, bn.lower, bn.capacity) == (tr.r_hat, tr.r_check, tr.f_alpha)
