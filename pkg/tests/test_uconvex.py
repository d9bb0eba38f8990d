"""Grid transforms between price schedules and indirect utilities."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from nltariff.model import ConstantReservation, ScenarioConfig, canonical_params
from nltariff.solver_const_h import build_tariff_const_h, solve_x0_star
from nltariff.uconvex import (
    SampledFunctionOfConsumption,
    SampledFunctionOfType,
    check_u_convexity,
    default_c_grid,
    u_transform_indirect_to_price,
    u_transform_price_to_indirect,
)


def make_params(gamma=0.5):
    H = 0.05 if gamma > 0 else -0.1
    return canonical_params(gamma, reservation=ConstantReservation(H), time_nodes=3)


def utility_surface(params, x, c):
    return params.g(x)[None, :, None] * params.phi[:, None, None] * (
        c[None, None, :] ** params.gamma) / params.gamma


def test_price_equal_to_top_type_utility_gives_zero_indirect_at_one():
    params = make_params(0.5)
    c = np.linspace(0.0, 5.0, 301)
    top = params.g(np.asarray([1.0]))[0] * params.phi[:, None] * c[None, :] ** 0.5 / 0.5
    p = SampledFunctionOfConsumption(c_grid=c, values=top)
    ind, _ = u_transform_price_to_indirect(p, params, x_grid=np.linspace(0, 1, 101))
    assert_allclose(ind.values[:, -1], 0.0, atol=1e-12)


def test_constant_price_gives_corner_solution():
    params = make_params(0.5)
    c = np.linspace(0.0, 5.0, 301)
    kappa = 0.7
    p = SampledFunctionOfConsumption(c_grid=c, values=np.full((3, c.size), kappa))
    ind, arg = u_transform_price_to_indirect(p, params, x_grid=np.linspace(0, 1, 51))
    # utility increasing in c: everyone maxes out the grid (x=0 is indifferent)
    assert np.all(arg[:, 1:] == c.size - 1)
    expect = utility_surface(params, np.linspace(0, 1, 51), c[-1:])[:, :, 0] - kappa
    assert_allclose(ind.values, expect, rtol=1e-12)


def test_linear_indirect_utility_conjugates_to_positive_part():
    params = make_params(0.5)
    K0 = 0.4
    x = np.linspace(0.0, 1.0, 201)
    p_star = SampledFunctionOfType(x_grid=x, values=np.tile(K0 * x, (3, 1)))
    c = np.linspace(0.0, 3.0, 257)
    price, arg = u_transform_indirect_to_price(p_star, params, c_grid=c)
    expect = np.maximum(params.phi[:, None] * c[None, :] ** 0.5 / 0.5 - K0, 0.0)
    assert_allclose(price.values, expect, atol=1e-12)
    assert np.all((arg == 0) | (arg == x.size - 1))


def test_zero_indirect_utility_prices_at_top_type():
    params = make_params(0.5)
    x = np.linspace(0.0, 1.0, 101)
    p_star = SampledFunctionOfType(x_grid=x, values=np.zeros((3, x.size)))
    c = np.linspace(0.0, 3.0, 100)
    price, _ = u_transform_indirect_to_price(p_star, params, c_grid=c)
    expect = utility_surface(params, np.asarray([1.0]), c)[:, 0, :]
    assert_allclose(price.values, expect, rtol=1e-12)


@pytest.mark.parametrize("gamma", [0.5, -1.0])
def test_closed_form_round_trips_within_grid_resolution(gamma):
    """Sampled transforms reproduce the emitted closed forms up to a
    Lipschitz-scaled grid increment, in both directions."""
    params = make_params(gamma)
    cfg = ScenarioConfig(params=params)
    report = solve_x0_star(cfg)
    tariff, p_star = build_tariff_const_h(cfg, report)
    c_top = float(tariff.breakpoints["c_hat"].max()) * 1.2
    c = np.linspace(0.0, c_top, 512) if gamma > 0 else np.geomspace(c_top * 1e-5, c_top, 512)
    xg = np.linspace(0.0, 1.0, 601)

    # price -> indirect: compare above the participation threshold
    sampled_price = tariff.sample(c)
    ind, _ = u_transform_price_to_indirect(sampled_price, params, x_grid=xg)
    mask = xg >= report.boundary["x0"]
    exact = p_star.values(xg)
    err = np.abs(ind.values[:, mask] - exact[:, mask]).max()
    bound = 2.0 * np.abs(np.diff(sampled_price.values, axis=1)).max()
    assert err <= bound + 1e-9

    # indirect -> price: compare on the selected consumption band
    price, _ = u_transform_indirect_to_price(p_star.sample(np.linspace(0, 1, 2001)), params, c_grid=c)
    bands = tariff.selected_range[0]
    sel = (c >= bands[:, 0].max()) & (c <= bands[:, 1].min())
    exact_price = np.vstack([tariff.price(i, c) for i in range(3)])
    err_p = np.abs(price.values[:, sel] - exact_price[:, sel]).max()
    bound_p = 2.0 * np.abs(np.diff(exact)).max() + 1e-6
    assert err_p <= bound_p


def test_convex_indirect_utility_passes_check():
    params = make_params(0.5)
    x = np.linspace(0.0, 1.0, 201)
    p_star = SampledFunctionOfType(x_grid=x, values=np.tile(x ** 2, (3, 1)))
    rep = check_u_convexity(p_star, params)
    assert rep.is_u_convex
    assert not rep.convexity_violations


def test_concave_indirect_utility_fails_check():
    params = make_params(0.5)
    x = np.linspace(0.0, 1.0, 201)
    p_star = SampledFunctionOfType(x_grid=x, values=np.tile(np.sqrt(x), (3, 1)))
    rep = check_u_convexity(p_star, params)
    assert not rep.is_u_convex
    assert rep.convexity_violations


def test_nonconvex_bridge_shape_reports_positive_gap():
    # a glue with b0 > a0 - 1/2 cannot be convex: gap must be detected
    params = make_params(0.5)
    x = np.linspace(0.0, 1.0, 401)
    a0, b0 = 0.62, 0.35  # violates b0 <= a0 - 1/2
    m = 2.0  # 1/(1-gamma)
    lower = 0.1 - 0.8 * (b0 ** m - np.minimum(x, b0) ** m)
    upper = 0.45 + 0.8 * (np.maximum(x - 0.5, 0.0) ** m - (a0 - 0.5) ** m)
    vals = np.where(x < b0, lower, np.nan)
    chord = lower[np.searchsorted(x, b0) - 1] + (x - b0) * (0.45 - 0.1) / (a0 - b0)
    vals = np.where((x >= b0) & (x <= a0), np.maximum(chord, lower[-1] * 0 + chord), vals)
    vals = np.where(x > a0, upper, vals)
    p_star = SampledFunctionOfType(x_grid=x, values=np.tile(vals, (3, 1)))
    rep = check_u_convexity(p_star, params, c_grid=np.linspace(0.0, 6.0, 1500))
    assert not rep.is_u_convex
    assert rep.max_biconjugation_gap > 1e-4


def test_biconjugation_idempotent_to_float_precision():
    params = make_params(-0.8)
    rng = np.random.RandomState(7)
    x = np.linspace(0.0, 1.0, 101)
    vals = np.cumsum(rng.rand(3, x.size) * 0.02, axis=1) - 0.8  # rough nondecreasing
    p_star = SampledFunctionOfType(x_grid=x, values=vals)
    c = default_c_grid(params, size=301)
    p1, _ = u_transform_indirect_to_price(p_star, params, c_grid=c)
    b1, _ = u_transform_price_to_indirect(p1, params, x_grid=x)       # (p*)**
    p2, _ = u_transform_indirect_to_price(b1, params, c_grid=c)
    b2, _ = u_transform_price_to_indirect(p2, params, x_grid=x)       # ((p*)**)**
    assert np.abs(b2.values - b1.values).max() <= 1e-12


def test_transforms_order_reversing():
    params = make_params(0.5)
    rng = np.random.RandomState(3)
    c = np.linspace(0.0, 4.0, 200)
    base = np.cumsum(rng.rand(3, c.size) * 0.05, axis=1)
    lift = rng.rand(3, c.size) * 0.3
    pa = SampledFunctionOfConsumption(c_grid=c, values=base)
    pb = SampledFunctionOfConsumption(c_grid=c, values=base + lift)   # pb >= pa
    ia, _ = u_transform_price_to_indirect(pa, params)
    ib, _ = u_transform_price_to_indirect(pb, params)
    assert np.all(ia.values >= ib.values - 1e-12)


def test_transform_output_nondecreasing_in_type():
    params = make_params(0.5)
    rng = np.random.RandomState(11)
    c = np.linspace(0.0, 4.0, 300)
    vals = np.cumsum(rng.rand(3, c.size) * 0.02, axis=1)
    p = SampledFunctionOfConsumption(c_grid=c, values=vals)
    ind, _ = u_transform_price_to_indirect(p, params, x_grid=np.linspace(0, 1, 157))
    assert np.all(np.diff(ind.values, axis=1) >= -1e-12)


def test_argmax_set_reports_all_ties_at_kinks():
    from nltariff.uconvex import grid_argmax_set

    surface = np.array([0.0, 1.0, 1.0, 0.5, 1.0])
    ties = grid_argmax_set(surface)
    assert set(ties.tolist()) == {1, 2, 4}


def test_convex_surface_gap_within_grid_resolution_bound():
    """A convex nondecreasing surface keeps its biconjugation gap inside the
    grid-increment bound on the canonical industrial branch."""
    params = make_params(0.5)
    x = np.linspace(0.0, 1.0, 401)
    p_star = SampledFunctionOfType(x_grid=x, values=np.tile(0.8 * x ** 2, (3, 1)))
    c = np.linspace(0.0, 8.0, 1601)
    rep = check_u_convexity(p_star, params, c_grid=c)
    assert rep.is_u_convex
    price, _ = u_transform_indirect_to_price(p_star, params, c_grid=c)
    bound = 2.0 * max(np.abs(np.diff(p_star.values, axis=1)).max(),
                      np.abs(np.diff(price.values, axis=1)).max())
    assert rep.max_biconjugation_gap <= bound
