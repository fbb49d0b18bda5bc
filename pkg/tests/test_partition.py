"""Tests for the cluster-splitting search and its quantized oracle."""

import json
import math

import numpy as np
import pytest

from triblock.geometry import GammaMatrix, e0, single_energy
from triblock.partition import (
    Cluster,
    Configuration,
    E0,
    KIND_DOUBLE,
    KIND_SINGLE_1,
    KIND_SINGLE_2,
    SearchBudget,
    check_necessary_conditions,
    classify_regime,
    cluster_from_masses,
    coexistence_bounds,
    config_energy,
    configuration_from_dict,
    ebar,
    ebar_oracle,
    quantization_bound,
    round_config_to_grid,
    thresholds,
    write_sweep_csv,
)

G_PLAIN = GammaMatrix(1.0, 1.0, 0.0)
G_WEAK_CROSS = GammaMatrix(1.0, 1.0, 0.1)
DELTA = 1.0 / 64


def best_equal_split(mass, gamma_ii, k_max=12):
    return min(k * single_energy(mass / k, gamma_ii) for k in range(1, k_max + 1))


def test_threshold_closed_forms():
    th = thresholds(G_PLAIN)
    assert th.max_mass[0] == pytest.approx(8.0 * math.pi, rel=1e-14)
    assert th.max_mass[1] == pytest.approx(8.0 * math.pi, rel=1e-14)
    assert th.single_floor[0] == pytest.approx(math.pi / 16.0, rel=1e-14)
    expected_split = (4.0 * math.pi * math.sqrt(math.pi)
                      * 2.0 * math.sqrt(8.0 * math.pi)
                      / (th.concavity[0] * th.concavity[1]))
    assert th.gamma12_split == pytest.approx(expected_split, rel=1e-12)


def test_threshold_scaling_with_gamma():
    th1 = thresholds(G_PLAIN)
    th8 = thresholds(GammaMatrix(8.0, 8.0, 0.0))
    assert th8.max_mass[0] == pytest.approx(th1.max_mass[0] / 4.0, rel=1e-13)
    assert th8.single_floor[0] == pytest.approx(
        4.0 * math.pi ** 3 / (8.0 * th8.max_mass[0]) ** 2, rel=1e-13)


def test_threshold_probe_dependence():
    # The concavity threshold shrinks as the partner lobe grows, so the
    # uniform (probe=None) value sits below a light-partner value.
    th_uniform = thresholds(G_PLAIN)
    th_light = thresholds(G_PLAIN, probe=1.0)
    assert th_uniform.concavity[0] < th_light.concavity[0]


def test_cluster_kind_validation():
    with pytest.raises(ValueError):
        Cluster(KIND_DOUBLE, 1.0, 0.0)
    with pytest.raises(ValueError):
        Cluster(KIND_SINGLE_1, 1.0, 0.5)
    with pytest.raises(ValueError):
        Cluster(KIND_SINGLE_2, 0.0, -1.0)
    with pytest.raises(ValueError):
        Cluster("triple", 1.0, 1.0)
    with pytest.raises(ValueError):
        cluster_from_masses(0.0, 0.0)


def test_configuration_sum_validation():
    good = Configuration((cluster_from_masses(1.0, 0.5),), (1.0, 0.5))
    assert good.counts()[KIND_DOUBLE] == 1
    with pytest.raises(ValueError):
        Configuration((cluster_from_masses(1.0, 0.5),), (1.0, 0.6))


def test_configuration_json_round_trip():
    _, conf = ebar((1.0, 1.0), G_WEAK_CROSS)
    data = json.loads(json.dumps(conf.as_dict(), sort_keys=True))
    assert configuration_from_dict(data) == conf


def test_ebar_single_species_small_mass():
    value, conf = ebar((2.0, 0.0), G_PLAIN)
    assert value == pytest.approx(single_energy(2.0, 1.0), rel=1e-12)
    assert conf.counts() == {KIND_DOUBLE: 0, KIND_SINGLE_1: 1, KIND_SINGLE_2: 0}


def test_ebar_single_species_splits():
    value, conf = ebar((20.0, 0.0), G_PLAIN)
    assert value == pytest.approx(best_equal_split(20.0, 1.0), rel=1e-10)
    n = conf.counts()[KIND_SINGLE_1]
    assert n >= 2
    sizes = [c.m1 for c in conf.clusters]
    assert max(sizes) - min(sizes) <= 1e-8 * max(sizes)


def test_ebar_small_masses_prefer_one_double():
    value, conf = ebar((1.0, 1.0), G_WEAK_CROSS)
    assert conf.counts() == {KIND_DOUBLE: 1, KIND_SINGLE_1: 0, KIND_SINGLE_2: 0}
    assert value == pytest.approx(e0((1.0, 1.0), G_WEAK_CROSS), rel=1e-12)
    assert conf.clusters[0].m1 == pytest.approx(1.0, abs=1e-12)
    assert conf.clusters[0].m2 == pytest.approx(1.0, abs=1e-12)


def test_ebar_strong_cross_splits_to_singles():
    g = GammaMatrix(4.0, 4.0, 6.0)
    value, conf = ebar((1.0, 1.0), g)
    assert conf.counts() == {KIND_DOUBLE: 0, KIND_SINGLE_1: 1, KIND_SINGLE_2: 1}
    assert value == pytest.approx(single_energy(1.0, 4.0) * 2.0, rel=1e-12)


def test_ebar_swap_invariance_exact():
    g = GammaMatrix(1.0, 2.0, 0.3)
    v_a, conf_a = ebar((0.7, 1.9), g)
    v_b, conf_b = ebar((1.9, 0.7), g.swapped())
    assert v_a == v_b
    swapped_back = [(c.kind, c.m2, c.m1) for c in conf_b.clusters]
    direct = [(c.kind, c.m1, c.m2) for c in conf_a.clusters]
    kind_swap = {KIND_SINGLE_1: KIND_SINGLE_2, KIND_SINGLE_2: KIND_SINGLE_1,
                 KIND_DOUBLE: KIND_DOUBLE}
    swapped_back = sorted((kind_swap[k], a, b) for k, a, b in swapped_back)
    assert swapped_back == sorted(direct)


def test_ebar_deterministic_repeat():
    out1 = ebar((1.3, 0.9), G_WEAK_CROSS, seed=5)
    out2 = ebar((1.3, 0.9), G_WEAK_CROSS, seed=5)
    assert out1[0] == out2[0]
    assert out1[1] == out2[1]


def test_ebar_subadditive_under_random_splits():
    rng = np.random.default_rng(11)
    value, _ = ebar((1.3, 0.9), G_WEAK_CROSS)
    for trial in range(100):
        parts = rng.integers(2, 5)
        w1 = rng.dirichlet(np.ones(parts)) * 1.3
        w2 = rng.dirichlet(np.ones(parts)) * 0.9
        clusters = [cluster_from_masses(a, b) for a, b in zip(w1, w2)]
        split_energy = config_energy(clusters, G_WEAK_CROSS)
        assert value <= split_energy + 1e-12 * max(1.0, split_energy)


def test_ebar_agrees_with_oracle():
    cases = [((1.0, 1.0), G_PLAIN),
             ((1.0, 1.0), GammaMatrix(4.0, 4.0, 6.0)),
             ((1.5, 1.0), GammaMatrix(8.0, 2.0, 0.5)),
             ((2.0, 2.0), GammaMatrix(16.0, 16.0, 0.0))]
    for M, g in cases:
        value, conf = ebar(M, g)
        grid_value = ebar_oracle(M, g, delta=DELTA, max_parts=12)
        bound = quantization_bound(conf, g, DELTA)
        assert value <= grid_value + 1e-9
        assert grid_value <= value + bound


def test_oracle_pure_species_closed_form():
    assert ebar_oracle((1.0, 0.0), G_PLAIN, delta=DELTA) == pytest.approx(
        single_energy(1.0, 1.0), rel=1e-12)
    assert ebar_oracle((2.0, 0.0), GammaMatrix(16.0, 1.0, 0.0),
                       delta=DELTA) == pytest.approx(
        best_equal_split(2.0, 16.0), rel=1e-12)


def test_oracle_refines_monotonically():
    # Every coarse-grid configuration is representable on the finer grid,
    # so the optimum cannot rise; allow a couple of ulps of float noise.
    values = [ebar_oracle((1.0, 1.0), G_WEAK_CROSS, delta=d)
              for d in (1.0 / 16, 1.0 / 32, 1.0 / 64)]
    eps = 1e-12 * values[0]
    assert values[0] >= values[1] - eps
    assert values[1] >= values[2] - eps


def test_oracle_guards():
    with pytest.raises(RuntimeError, match="budget"):
        ebar_oracle((10.0, 10.0), G_PLAIN, delta=DELTA)
    with pytest.raises(ValueError):
        ebar_oracle((1.0, 1.0), G_PLAIN, max_parts=0)
    with pytest.raises(ValueError):
        ebar_oracle((0.001, 0.001), G_PLAIN, delta=1.0)
    with pytest.raises(ValueError):
        ebar_oracle((0.0, 0.0), G_PLAIN)


def test_round_to_grid_preserves_totals():
    clusters = (cluster_from_masses(0.37, 0.21),
                cluster_from_masses(0.63, 0.79))
    conf = Configuration(clusters, (1.0, 1.0))
    rounded = round_config_to_grid(conf, DELTA)
    s1 = sum(c.m1 for c in rounded)
    s2 = sum(c.m2 for c in rounded)
    assert s1 == pytest.approx(1.0, abs=1e-12)
    assert s2 == pytest.approx(1.0, abs=1e-12)
    for c in rounded:
        for m in (c.m1, c.m2):
            assert abs(m / DELTA - round(m / DELTA)) < 1e-9


def test_quantization_bound_positive_and_valid():
    value, conf = ebar((1.0, 0.75), GammaMatrix(8.0, 2.0, 0.5))
    bound = quantization_bound(conf, GammaMatrix(8.0, 2.0, 0.5), DELTA)
    assert bound > 0.0
    grid_value = ebar_oracle((1.0, 0.75), GammaMatrix(8.0, 2.0, 0.5),
                             delta=DELTA)
    assert grid_value <= value + bound


def test_necessary_conditions_pass_on_search_output():
    for M, g in [((1.0, 1.0), G_WEAK_CROSS),
                 ((20.0, 0.0), G_PLAIN),
                 ((2.0, 2.0), GammaMatrix(16.0, 16.0, 0.0))]:
        _, conf = ebar(M, g)
        report = check_necessary_conditions(conf, g)
        assert report["all_pass"], report


def test_necessary_conditions_flag_violations():
    # One oversized single trips the mass cap.
    big = Configuration((cluster_from_masses(30.0, 0.0),), (30.0, 0.0))
    assert not check_necessary_conditions(big, G_PLAIN)["mass_caps"]
    # Two singles below the repeated-singles floor.
    tiny = Configuration((cluster_from_masses(0.1, 0.0),
                          cluster_from_masses(0.1, 0.0)), (0.2, 0.0))
    report = check_necessary_conditions(tiny, G_PLAIN)
    assert not report["single_floor"]
    # Unequal singles of the same species break derivative balance.
    lopsided = Configuration((cluster_from_masses(10.0, 0.0),
                              cluster_from_masses(14.0, 0.0)), (24.0, 0.0))
    report = check_necessary_conditions(lopsided, G_PLAIN)
    assert not report["derivative_balance"]


def test_classify_regime_one_double():
    report = classify_regime((1.0, 1.0), G_WEAK_CROSS)
    assert report["guarantee"] == "one_double"
    assert report["one_double"]["split_margin"] > 0.0
    assert report["search"]["consistent"]


def test_classify_regime_all_singles():
    g = GammaMatrix(1.0, 1.0, 41.0)
    th = thresholds(g)
    assert g.g12 > th.gamma12_split
    report = classify_regime((101.0, 101.0), g)
    assert report["guarantee"] == "no_doubles"
    counts = report["search"]["counts"]
    assert counts[KIND_DOUBLE] == 0
    assert report["search"]["consistent"]


def test_classify_regime_coexistence():
    th = thresholds(G_PLAIN)
    m1 = 1.02 * th.max_mass[0]
    _, b2 = coexistence_bounds(G_PLAIN, 1, 1, m1=m1)
    report = classify_regime((m1, 1.02 * b2), G_PLAIN)
    assert report["guarantee"] == "coexistence"
    assert report["coexistence"]["guaranteed_doubles"] >= 1
    assert report["coexistence"]["singles_species"] == 2
    counts = report["search"]["counts"]
    assert counts[KIND_DOUBLE] >= 1
    assert counts[KIND_SINGLE_2] >= 1
    assert report["search"]["consistent"]


def test_E0_sentinels_and_sum():
    assert E0([], G_PLAIN) == math.inf
    assert E0([(0.0, 0.0)], G_PLAIN) == math.inf
    assert E0([(1.0, -2.0)], G_PLAIN) == math.inf
    assert E0([(1.0, float("nan"))], G_PLAIN) == math.inf
    total = E0([(1.0, 0.0), (1.0, 0.0)], G_PLAIN)
    assert total == pytest.approx(2.0 * single_energy(1.0, 1.0), rel=1e-12)


def test_write_sweep_csv_deterministic(tmp_path):
    rows = [{"m1": 1.0, "m2": 0.5, "energy": 6.534199691360831},
            {"m1": 2.0, "m2": 1.0, "energy": 9.213}]
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    write_sweep_csv(p1, rows)
    write_sweep_csv(p2, rows)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "energy,m1,m2"
    with pytest.raises(ValueError):
        write_sweep_csv(p1, [])
    empty = tmp_path / "empty.csv"
    write_sweep_csv(empty, [], columns=["m1", "m2", "energy"])
    assert empty.read_text() == "m1,m2,energy\n"


def test_search_budget_restart_knob():
    lean = SearchBudget(restarts=4, top_cells=8)
    value, conf = ebar((1.0, 1.0), G_WEAK_CROSS, budget=lean)
    assert value == pytest.approx(e0((1.0, 1.0), G_WEAK_CROSS), rel=1e-12)
    assert conf.counts()[KIND_DOUBLE] == 1
