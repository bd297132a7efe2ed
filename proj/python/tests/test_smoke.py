import json

import pytest

import cmbpo


def test_warmup_shapes_and_determinism():
    spec = cmbpo.EnvSpec()
    spec.horizon = 25
    rows = cmbpo.collect_warmup(spec, 100, seed=3)
    assert len(rows) == 100
    again = cmbpo.collect_warmup(spec, 100, seed=3)
    assert [t.x_next for t in rows] == [t.x_next for t in again]
    assert all(-1.0 <= t.a <= 1.0 for t in rows)


def test_discovery_recovers_true_graph():
    rows = cmbpo.collect_warmup(cmbpo.EnvSpec(), 10_000, seed=5)
    graph = json.loads(cmbpo.discover_graph(rows, alpha=0.01))
    edges = {(e["from"], e["to"]) for e in graph["edges"]}
    assert edges == {
        ("X", "X_next"),
        ("A", "X_next"),
        ("X_next", "Z_next"),
        ("X", "R"),
    }


def test_cif_spurious_flow_is_tiny():
    rows = cmbpo.collect_warmup(cmbpo.EnvSpec(), 10_000, seed=7)
    assert cmbpo.estimate_cif(rows, "Z", "R", ["Z", "X"]) < 0.01
    assert cmbpo.estimate_cif(rows, "A", "X_next", ["A", "X"]) > 0.05


def test_shift_constructors():
    near = cmbpo.apply_shift(cmbpo.EnvSpec(), "near", z=0.0)
    assert json.loads(near.to_json())["z_intervention"] == 0.0
    far = cmbpo.apply_shift(cmbpo.EnvSpec(), "far")
    assert far.kappa == -1
    with pytest.raises(cmbpo.EnvError):
        cmbpo.apply_shift(cmbpo.EnvSpec(), "sideways")


def test_train_eval_round_trip():
    cfg = {
        "train": {
            "episodes": 2,
            "horizon": 20,
            "warmup_steps": 60,
            "model_train_steps": 5,
        },
        "sac": {"batch_size": 32, "hidden": [16, 16]},
        "model": {"ensemble_size": 2, "hidden": [16, 16], "batch_size": 32},
        "discovery": {"oracle_ci": True},
    }
    out = json.loads(cmbpo.train(json.dumps(cfg), variant="cmbpo", seed=1))
    assert len(out["returns"]) == 2
    assert {(e["from"], e["to"]) for e in out["graph"]["edges"]} >= {("X", "R")}
    returns = cmbpo.evaluate(
        json.dumps(out["checkpoint"]), shift="id", episodes=3, seed=1
    )
    assert len(returns) == 3
    mean, se, lo, hi = cmbpo.summarize(returns)
    assert lo <= mean <= hi


def test_config_schema_rejects_unknown_keys():
    with pytest.raises(cmbpo.ConfigError):
        cmbpo.train(json.dumps({"trian": {}}), variant="sac", seed=1)
