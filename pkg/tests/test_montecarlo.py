import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import abs_acceptance_quadrature
from urbanlos.citygen import Building, CityModel, Highway, preset
from urbanlos.errors import NoHighways, PlacementExhausted, ValidationError
from urbanlos.montecarlo import (
    N_BINS,
    PlosCurve,
    SimulationConfig,
    bin_angles,
    city_for,
    collides,
    inside_footprints,
    place_abs,
    place_ues,
    place_ues_highway,
    run,
    run_rh_split,
    simulate,
)
from urbanlos.rng import derive_seed, mix64

URBAN = preset("urban")


def cfg(**kw):
    base = dict(params=URBAN, layout="rm", h_abs_max=500.0, n_ue=300, n_cities=4, seed=3)
    base.update(kw)
    return SimulationConfig(**base)


def test_seed_derivation():
    assert mix64(0) == 0
    assert derive_seed(1, 2, 3) == derive_seed(derive_seed(1, 2), 3)
    seeds = {derive_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000


def test_abs_empty_city_first_draw():
    city = CityModel("ru", URBAN, ())
    rng = np.random.default_rng(0)
    expected = np.random.default_rng(0)
    x, y = expected.uniform(0, 1000, 2)
    z = expected.random() * 50
    assert place_abs(city, 50.0, rng) == pytest.approx((x, y, z))


def test_abs_acceptance_matches_quadrature():
    """Accepted fraction of raw ABS draws vs the integral 1 - alpha*E[P(h > z)]."""
    city = city_for("ru", preset("dense-urban"), 0)
    rng = np.random.default_rng(1)
    n = 40_000
    pts = np.column_stack([rng.uniform(0, 1000, (n, 2)), rng.random(n) * 100.0])
    a = city.arrays
    hit = np.zeros(n, dtype=bool)
    for s in range(0, n, 2000):
        p = pts[s : s + 2000]
        hit[s : s + 2000] = (
            (p[:, :1] >= a["x0"]) & (p[:, :1] <= a["x1"]) & (p[:, 1:2] >= a["y0"]) & (p[:, 1:2] <= a["y1"])
            & (p[:, 2:3] < a["h"])
        ).any(axis=1)
    spot = [collides(city, tuple(p)) for p in pts[:200]]
    assert spot == list(hit[:200])
    expected = abs_acceptance_quadrature(city.achieved_alpha, 20.0, 100.0)
    assert abs((1 - hit.mean()) - expected) < 0.02


def test_abs_never_inside_building():
    city = city_for("rm", preset("high-rise"), 4)
    rng = np.random.default_rng(2)
    for _ in range(200):
        assert not collides(city, place_abs(city, 100.0, rng))


def test_abs_exhausted():
    city = CityModel("ru", URBAN, (Building(0, 0, 1000, 1000, 100),))
    with pytest.raises(PlacementExhausted):
        place_abs(city, 50.0, np.random.default_rng())


def test_ue_rejection_rate():
    city = city_for("ru", URBAN, 8)
    rng = np.random.default_rng(3)
    raw = rng.uniform(0, 1000, (200_000, 2))
    assert abs(inside_footprints(city, raw).mean() - city.achieved_alpha) < 0.01
    ues = place_ues(city, 5000, 1.5, rng)
    assert ues.shape == (5000, 3) and (ues[:, 2] == 1.5).all()
    assert not inside_footprints(city, ues[:, :2]).any()


def test_ue_empty_city_uniform():
    ues = place_ues(CityModel("ru", URBAN, ()), 20_000, 0.0, np.random.default_rng(0))
    assert ues[:, 0].mean() == pytest.approx(500, abs=10)
    assert ues[:, :2].min() >= 0 and ues[:, :2].max() <= 1000


def test_highway_ues_split():
    hws = (Highway("horizontal", 100, 50), Highway("horizontal", 600, 50))
    city = CityModel("rh", URBAN, (), hws)
    ues = place_ues_highway(city, 10_000, np.random.default_rng(4))
    top = (ues[:, 1] >= 600).sum()
    assert abs(top - 5000) <= 3 * np.sqrt(10_000 * 0.25)
    in_strip = ((ues[:, 1] >= 100) & (ues[:, 1] <= 150)) | ((ues[:, 1] >= 600) & (ues[:, 1] <= 650))
    assert in_strip.all()
    assert ues[:, 0].min() >= 0 and ues[:, 0].max() <= 1000
    with pytest.raises(NoHighways):
        place_ues_highway(CityModel("ru", URBAN, ()), 10, np.random.default_rng())


@settings(max_examples=100, deadline=None)
@given(theta=st.floats(0, 90))
def test_binning_property(theta):
    b = int(bin_angles(np.array([theta]))[0])
    assert 0 <= b <= 90 and abs(b - theta) <= 0.5
    c = int(bin_angles(np.array([theta]), "ceil")[0])
    assert c - 1 < theta <= c or (theta == 0 and c == 0)


def test_binning_half_up():
    assert list(bin_angles(np.array([0.49, 0.5, 44.5, 89.6, 90.0]))) == [0, 1, 45, 90, 90]
    with pytest.raises(ValidationError):
        bin_angles(np.array([1.0]), "floor")


def test_counts_and_bounds():
    curve = run(cfg())
    assert curve.total_count == 4 * 300
    d = curve.defined
    assert ((curve.plos[d] >= 0) & (curve.plos[d] <= 1)).all()
    assert (curve.los_sum <= curve.los_count).all()
    assert np.isnan(curve.plos[curve.los_count == 0]).all()


def test_abs_per_city_scales_counts():
    assert run(cfg(abs_per_city=3)).total_count == 3 * 4 * 300


def test_vacuous_city():
    curve = run(cfg(no_buildings=True))
    assert (curve.plos[curve.defined] == 1.0).all()


def test_determinism_across_threads():
    c = cfg(layout="ru", n_cities=3)
    a, b = simulate(c, threads=1).curve, simulate(c, threads=2).curve
    assert np.array_equal(a.los_sum, b.los_sum) and np.array_equal(a.los_count, b.los_count)


def test_seed_changes_result():
    assert not np.array_equal(run(cfg()).los_sum, run(cfg(seed=4)).los_sum)


def test_ceil_binning_shifts_mass_up():
    n = run(cfg(binning="nearest"))
    c = run(cfg(binning="ceil"))
    assert n.total_count == c.total_count
    assert (np.arange(N_BINS) * c.los_count).sum() > (np.arange(N_BINS) * n.los_count).sum()


def test_rh_split_counts():
    street, hw = run_rh_split(cfg(layout="rh", n_cities=2))
    assert street.total_count == hw.total_count == 600
    street, hw = run_rh_split(cfg(layout="rh", n_cities=2, no_buildings=True))
    assert (street.plos[street.defined] == 1).all() and (hw.plos[hw.defined] == 1).all()
    with pytest.raises(NoHighways):
        run_rh_split(cfg(layout="ru"))


def test_config_validation_and_roundtrip():
    with pytest.raises(ValidationError):
        cfg(h_abs_max=0)
    with pytest.raises(ValidationError):
        cfg(layout="grid")
    with pytest.raises(ValidationError):
        SimulationConfig.from_dict({"params": URBAN.to_dict(), "layout": "rm"})
    c = cfg(layout="rh", highways=(Highway("vertical", 300, 40),))
    d = c.to_dict()
    assert SimulationConfig.from_dict(d) == c
    assert SimulationConfig.from_dict(d).hash() == c.hash()


def test_curve_mean_gating():
    c = PlosCurve.from_accumulators(np.r_[np.ones(45), np.zeros(46)], np.r_[np.ones(45), np.full(46, 100)])
    assert c.mean() == pytest.approx(45 / 91)
    assert c.mean(min_count=30) == 0.0


def test_errors_carry_city_index():
    full = CityModel("ru", URBAN, (Building(0, 0, 1000, 1000, 100),))
    with pytest.raises(PlacementExhausted, match="city 0"):
        simulate(cfg(n_cities=1), city=full)
