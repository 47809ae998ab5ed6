import math

import numpy as np
import pytest

import equiroute as er


def test_synthetic_table_shapes_and_determinism():
    a = er.generate_synthetic(n_queries=300, n_models=4, embed_dim=8, noise_seed=3)
    b = er.generate_synthetic(n_queries=300, n_models=4, embed_dim=8, noise_seed=3)
    assert (a.num_queries, a.num_models, a.embed_dim) == (300, 4, 8)
    assert a.perf.shape == (300, 4) and a.embeddings.shape == (300, 8)
    assert np.array_equal(a.cost, b.cost)
    assert (a.cost > 0).all()


def test_table_round_trip(tmp_path):
    t = er.generate_synthetic(n_queries=50, n_models=3, embed_dim=4)
    t.save(tmp_path / "t")
    back = er.load_table(tmp_path / "t")
    assert np.array_equal(back.perf, t.perf)
    assert np.array_equal(back.cost, t.cost)
    assert back.query_ids == t.query_ids


def test_oracle_rule_on_hand_table():
    t = er.RoutingTable(perf=np.array([[0.5, 0.9, 0.9]]), cost=np.array([[1.0, 3.0, 2.0]]), embeddings=np.zeros((1, 1)))
    assert er.oracle_select(t, 0, 10.0) == 2
    assert er.oracle_select(t, 0, 1.5) == 0
    assert er.margin(t, 0, 10.0) == 0.0
    assert er.margin(t, 0, 1.5) is None
    assert er.select_model([0.1, 0.9], [1.0, 5.0], 2.0) == (0, False)


def test_metrics():
    assert er.nauc([(0.0, 0.5), (1.0, 1.0)]) == pytest.approx(0.75, abs=1e-12)
    assert er.ranking_loss([0.0, 0.0], [1.0, 0.0], [1.0, 1.0]) == pytest.approx(math.log(2.0), abs=1e-12)
    cost, rel = er.qnc([(1.0, 0.7), (2.0, 0.8), (3.0, 0.8)], 0.8, 3.0)
    assert cost == 2.0 and rel == 2.0 / 3.0
    t = er.RoutingTable(perf=np.array([[1.0, 1.0, 1.0]]), cost=np.array([[1.0, 2.0, 3.0]]), embeddings=np.zeros((1, 1)))
    assert er.rci(t, [2])[0] == 1.0
    assert er.rci(t, [0])[0] == 0.0


def test_monte_carlo_and_noise():
    freq, se = er.mc_selection_frequencies([0.8, 0.79, 0.5], 0.1, 20000, 1)
    assert freq[0] > freq[1] > freq[2]
    assert sum(freq) == pytest.approx(1.0)
    t = er.generate_synthetic(n_queries=400, tie_fraction=0.95)
    rows = er.noise_sensitivity(t, [0.0, 0.2])
    assert rows[0]["accuracy"] >= rows[1]["accuracy"]


def test_evaluate_oracle_and_trained_router():
    t = er.generate_synthetic(n_queries=400)
    oracle = er.evaluate(t, {"router": "oracle"})
    assert oracle["rci"] == 0.0
    knn = er.evaluate(t, {"router": "knn", "knn.k": "5"})
    assert knn["peak_score"] <= oracle["peak_score"]


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        er.RoutingTable(perf=np.ones((2, 2)), cost=-np.ones((2, 2)), embeddings=np.zeros((2, 1)))
    with pytest.raises(er.ValidationError):
        er.evaluate(er.generate_synthetic(n_queries=50), {"router": "graph"})


def test_cli_entry_point(tmp_path):
    assert er.run_cli(["synth", "--out", str(tmp_path / "t"), "--set", "synth.n_queries=100"]) == 0
    assert er.run_cli(["sweep", "--router", "graph"]) == 1
