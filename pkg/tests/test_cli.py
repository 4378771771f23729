import json

import pytest

from smooth_reward.cli import (ConfigError, config_from_dict, load_config, main,
                               write_resolved_config)


def run(args, tmp_path):
    return main(args + ["--out", str(tmp_path)])


class TestConfig:
    def test_empty_file_defaults(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("")
        cfg = load_config(p)
        assert (cfg.k_min, cfg.k_max, cfg.steepness, cfg.center) == (1.0, 100.0, 10.0, 0.5)
        assert (cfg.group_size, cfg.reward_balance, cfg.kl_coeff) == (8, 0.1, 0.02)
        assert (cfg.alpha, cfg.adv_clip) == (1.0, 1.5)
        p.write_text("{}")
        assert load_config(p) == cfg

    def test_k_order_names_both_fields(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict({"k_min": 200})
        assert "k_min" in str(info.value) and "k_max" in str(info.value)

    def test_unknown_key_suggestion(self):
        with pytest.raises(ConfigError, match="k_max") as info:
            config_from_dict({"kmax": 5})
        assert info.value.field == "kmax"

    @pytest.mark.parametrize("data", [{"group_size": 2.5}, {"alpha": "one"}, {"binary_reward": 1},
                                      {"seed": True}, {"operator_kind": "relu"},
                                      {"ratio_clip": 2.0}])
    def test_type_and_domain_errors(self, data):
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_int_promoted_to_float(self):
        assert config_from_dict({"k_max": 50}).k_max == 50.0

    def test_malformed_json_line(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{\n  "seed": 1,\n  oops\n}')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(p)

    def test_resolved_round_trip(self, tmp_path):
        cfg = config_from_dict({"seed": 4, "alpha": 2.0, "corpus_size": 10})
        path = write_resolved_config(cfg, tmp_path)
        assert load_config(path) == cfg
        assert json.loads(path.read_text())["alpha"] == 2.0


class TestRun:
    def test_bad_config_exit_code(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text('{"kmax": 3}')
        assert run(["train", "--config", str(p)], tmp_path) == 2
        assert "k_max" in capsys.readouterr().err

    def test_train_outputs(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"total_steps": 20, "corpus_size": 8}))
        assert run(["train", "--config", str(p), "--seed", "3"], tmp_path) == 0
        out = tmp_path / "train_seed3"
        assert (out / "records.csv").exists() and (out / "resolved_config.json").exists()
        assert load_config(out / "resolved_config.json").seed == 3

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SMOOTH_REWARD_OUT", str(tmp_path / "envout"))
        assert main(["verify-verifiers", "--seed", "2"]) == 0
        assert (tmp_path / "envout" / "verify_verifiers_seed2" / "report.json").exists()

    def test_verify_theory(self, tmp_path):
        assert run(["verify-theory", "--seed", "1", "--n-groups", "20000"], tmp_path) == 0
        report = json.loads((tmp_path / "verify_theory_seed1" / "report.json").read_text())
        assert report["passed"] and report["seed"] == 1

    def test_roadmap_csv(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"total_steps": 30, "corpus_size": 8}))
        code = run(["roadmap", "--config", str(p), "--seed", "1"], tmp_path)
        body = (tmp_path / "roadmap_seed1" / "roadmap.csv").read_text()
        lines = body.splitlines()
        assert lines[0] == "mechanism,T_conv,adv_variance,final_accuracy"
        assert [l.split(",")[0] for l in lines[1:]] == [
            "binary_grpo", "snra_fixed_k_grpo", "ap_grpo_fixed_k", "ap_grpo_linear",
            "ap_grpo_sigmoid"]
        report = json.loads((tmp_path / "roadmap_seed1" / "report.json").read_text())
        assert "supervised" in report["note"]
        assert code == (0 if report["passed"] else 1)

    def test_ablation(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"total_steps": 20, "corpus_size": 8}))
        code = run(["ablate", "--config", str(p), "--axis", "operator_kind",
                    "--values", "sigmoid,tanh_shifted"], tmp_path)
        report = json.loads((tmp_path / "ablate_seed0" / "report.json").read_text())
        assert [r["value"] for r in report["rows"]] == ["sigmoid", "tanh_shifted"]
        assert code == (0 if report["passed"] else 1)

    def test_ablation_invalid_value(self, tmp_path):
        assert run(["ablate", "--axis", "k_min", "--values", "500"], tmp_path) == 2
