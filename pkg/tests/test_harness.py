import numpy as np
import pytest
import yaml

from nfv_dqn import placement as pc
from nfv_dqn.cli import main
from nfv_dqn.dqn import AgentConfig
from nfv_dqn.harness import (ExperimentConfig, MetricSeries, compare_policies, evaluate_policy, make_policy,
                             run_evaluation, run_training, simulate, solve_slot)
from nfv_dqn.scenario import generate_service_types, load_scenario
from nfv_dqn.topology import ConfigError

SMALL_AGENT = {"hidden": [16, 16], "train_threshold": 50, "batch_size": 8, "optimizer": "adam"}


def cfg(**kw):
    base = dict(scenario="tiny.yaml", training_slots=200, eval_slots=100, time_step=50, seed=3, agent=SMALL_AGENT)
    base.update(kw)
    return ExperimentConfig(**base)


def test_default_scenario_shape():
    sc = load_scenario()
    assert sc.graph.num_servers == 25
    assert [t.chain_length for t in sc.types] == [4, 4, 5, 5, 5]
    fs = [t.max_failure_prob for t in sc.types]
    assert fs == sorted(fs, reverse=True)


def test_generate_sorted_by_strictness():
    spec = {"seed": 1, "reliabilities": [95, 91, 99], "chain_length": [2, 6], "sort_by_strictness": True}
    out = generate_service_types(spec)
    by_rel = sorted(out, key=lambda e: e["reliability"])
    lengths = [len(e["demands"]) for e in by_rel]
    assert lengths == sorted(lengths)


def test_zero_slots_gives_empty_series():
    sc = load_scenario("tiny.yaml")
    series = simulate(sc.make_env(0), 0, 10, decide=make_policy("random", sc, 0))
    assert len(series) == 0


def test_series_rows_and_partial_window():
    sc = load_scenario("tiny.yaml")
    series = simulate(sc.make_env(0), 25, 10, decide=make_policy("greedy-cheapest", sc, 0))
    assert len(series) == 3
    assert sum(series.rows[-1][f"arrivals_{l}"] for l in range(3)) == 5 * 3
    assert 0.0 <= series.admission_ratio() <= 1.0


def test_metric_series_no_arrivals():
    with pytest.raises(ZeroDivisionError):
        MetricSeries(2).admission_ratio()


def test_conservation_every_slot():
    sc = load_scenario("tiny.yaml")
    env = sc.make_env(1)

    def check(env):
        used = np.zeros(env.graph.num_servers)
        for svc in env.active.values():
            for r, s in zip(svc.type.vnf_demands, svc.placement):
                used[s] += r
        assert np.allclose(used + env.ledger.remaining_server, env.graph.server_capacity)

    simulate(env, 300, 100, decide=make_policy("random", sc, 1), check=check)


def test_training_outputs_identical(tmp_path):
    run_training(cfg(), out_dir=tmp_path / "a")
    run_training(cfg(), out_dir=tmp_path / "b")
    for name in ("training.csv", "manifest.yaml", "checkpoint.npz"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    run_training(cfg(seed=4), out_dir=tmp_path / "c")
    assert (tmp_path / "a" / "training.csv").read_bytes() != (tmp_path / "c" / "training.csv").read_bytes()


def test_manifest_contents(tmp_path):
    run_training(cfg(), out_dir=tmp_path)
    m = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert m["verb"] == "train" and m["seed"] == 3
    assert m["config"]["agent"]["hidden"] == [16, 16]
    assert len(m["scenario"]["network"]["inps"]) == 3


def test_evaluation_does_not_touch_checkpoint(tmp_path):
    run_training(cfg(), out_dir=tmp_path)
    ck = tmp_path / "checkpoint.npz"
    before = ck.read_bytes()
    res = run_evaluation(ck, cfg(departure_probs=[0.4, 0.6]), out_dir=tmp_path / "ev")
    assert ck.read_bytes() == before
    assert set(res) == {0.4, 0.6}
    assert (tmp_path / "ev" / "eval_d0.4.csv").exists()


def test_zero_training_slots(tmp_path):
    agent, series = run_training(cfg(training_slots=0), out_dir=tmp_path)
    assert len(series) == 0 and agent.train_steps == 0
    assert (tmp_path / "checkpoint.npz").exists()
    assert (tmp_path / "training.csv").read_text().count("\n") == 1


def test_two_evaluations_agree(tmp_path):
    run_training(cfg(), out_dir=tmp_path)
    a = run_evaluation(tmp_path / "checkpoint.npz", cfg())[None]
    b = run_evaluation(tmp_path / "checkpoint.npz", cfg())[None]
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_evaluation_rejects_mismatched_checkpoint(tmp_path):
    run_training(cfg(), out_dir=tmp_path)
    with pytest.raises(ConfigError):
        run_evaluation(tmp_path / "checkpoint.npz", cfg(scenario=None))


def test_compare_shares_trace(tmp_path):
    table = compare_policies(cfg(), ["random", "greedy-most-reliable", "oracle"], out_dir=tmp_path)
    assert [r["policy"] for r in table] == ["random", "greedy-most-reliable", "oracle"]
    assert (tmp_path / "compare.csv").exists()
    sc = load_scenario("tiny.yaml")
    arrivals = [sum(r[f"arrivals_{l}"] for r in evaluate_policy(sc, p, cfg()).rows for l in range(3))
                for p in ("random", "oracle")]
    assert arrivals[0] == arrivals[1]


def test_compare_empty_list():
    with pytest.raises(ConfigError):
        compare_policies(cfg(), [])


def test_compare_dqn_needs_checkpoint():
    with pytest.raises(ConfigError):
        compare_policies(cfg(), ["dqn"])


def test_oracle_over_budget():
    with pytest.raises(ConfigError):
        compare_policies(cfg(scenario=None), ["oracle"])


def test_oracle_slots_are_feasible():
    sc = load_scenario("tiny.yaml")
    env = sc.make_env(2)
    decide = make_policy("oracle", sc, 2)
    for _ in range(50):
        while not env.slot_done:
            a = decide(env)
            if a is None:
                env.skip()
            else:
                assert pc.check_feasible(env.graph, env.ledger, env.pending, a).feasible
                env.step(a)
        env.advance_slot()


def test_solve_slot_tiny():
    out = solve_slot(cfg())
    assert out["admitted"] == len([p for p in out["placements"] if p is not None])
    assert len(out["requests"]) == 3


def test_unknown_policy():
    with pytest.raises(ConfigError):
        make_policy("best", load_scenario("tiny.yaml"), 0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(time_step=0)
    assert isinstance(cfg().agent, AgentConfig)


def test_config_from_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(cfg().to_dict()))
    assert ExperimentConfig.from_file(p) == cfg()


# -- command line ----------------------------------------------------------

def write_cfg(tmp_path, **kw):
    p = tmp_path / "exp.yaml"
    p.write_text(yaml.safe_dump(cfg(**kw).to_dict()))
    return str(p)


def test_cli_train_eval_compare(tmp_path, capsys):
    c = write_cfg(tmp_path)
    assert main(["train", "--config", c, "--out", str(tmp_path / "t")]) == 0
    assert "final admission ratio" in capsys.readouterr().out
    ck = str(tmp_path / "t" / "checkpoint.npz")
    assert main(["eval", "--config", c, "--checkpoint", ck, "--departure", "0.5", "0.9"]) == 0
    out = capsys.readouterr().out
    assert "d=0.5" in out and "d=0.9" in out
    assert main(["compare", "--config", c, "--checkpoint", ck, "--policy", "dqn", "--policy", "random"]) == 0
    assert "random" in capsys.readouterr().out


def test_cli_oracle(capsys):
    assert main(["oracle", "--scenario", "tiny.yaml"]) == 0
    assert '"admitted"' in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert main(["oracle"]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["compare", "--scenario", "tiny.yaml", "--policy", "dqn"]) == 1
    assert main(["eval", "--scenario", "tiny.yaml", "--checkpoint", str(tmp_path / "none.npz")]) == 1
    assert main(["train", "--scenario", str(tmp_path / "missing.yaml")]) == 1
    with pytest.raises(SystemExit):
        main(["compare", "--policy", "magic"])
