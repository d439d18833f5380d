import json

import pytest

from adasolve.config import ConfigError, build_client, build_estimator, load_config
from adasolve.estimator import EstimatorKind
from adasolve.llmclient import ChatRequest
from adasolve.policy import PolicyKind


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


MINIMAL = """
[estimator]
kind = "heuristic"
"""


class TestLoadConfig:
    def test_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        assert cfg.policy.kind is PolicyKind.ADAPTIVE
        assert cfg.estimator_kind is EstimatorKind.HEURISTIC
        assert cfg.policy.params.tau_dec == 3.0
        assert cfg.max_depth == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_malformed_toml(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "policy = [unclosed"))

    def test_env_interpolation(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEST_MODEL_NAME", "qwen-mini")
        cfg = load_config(
            write(
                tmp_path,
                """
[endpoints.solver]
base_url = "http://localhost:1234/v1"
model = "${TEST_MODEL_NAME}"
""",
            )
        )
        assert cfg.endpoints["solver"].model == "qwen-mini"

    def test_unset_env_var_is_an_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SURELY_UNSET_VAR_42", raising=False)
        with pytest.raises(ConfigError, match="SURELY_UNSET_VAR_42"):
            load_config(
                write(
                    tmp_path,
                    """
[endpoints.solver]
base_url = "${SURELY_UNSET_VAR_42}"
""",
                )
            )

    def test_unknown_policy_kind(self, tmp_path):
        with pytest.raises(ConfigError, match="policy kind"):
            load_config(write(tmp_path, '[policy]\nkind = "galactic"'))

    def test_endpoint_reference_must_exist(self, tmp_path):
        with pytest.raises(ConfigError, match="solver endpoint"):
            load_config(write(tmp_path, '[solver]\nendpoint = "ghost"'))

    def test_http_endpoint_needs_base_url(self, tmp_path):
        with pytest.raises(ConfigError, match="base_url"):
            load_config(write(tmp_path, '[endpoints.solver]\nmodel = "m"'))

    def test_unknown_endpoint_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(
                write(tmp_path, '[endpoints.solver]\nbase_url = "http://x"\ntypo_key = 1')
            )

    def test_policy_params_parsed(self, tmp_path):
        cfg = load_config(
            write(
                tmp_path,
                """
[policy]
kind = "fixed-tier"
fixed_k = 4
fixed_b = 2
tau_dec = 2.5
b_max = 8
""",
            )
        )
        assert cfg.policy.fixed_K == 4 and cfg.policy.fixed_B == 2
        assert cfg.policy.params.tau_dec == 2.5
        assert cfg.policy.params.B_max == 8


class TestBuildClient:
    def test_scripted_client_roundtrip(self, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(
            json.dumps([{"match": "*", "reply": "hi", "prompt_tokens": 1, "completion_tokens": 1}]),
            encoding="utf-8",
        )
        cfg = load_config(
            write(
                tmp_path,
                """
[solver]
endpoint = "mock"

[endpoints.mock]
type = "scripted"
script = "script.json"
""",
            )
        )
        client = build_client(cfg, "mock")
        assert client.complete(ChatRequest.user("x")).text == "hi"

    def test_relative_script_path_resolves_against_config_dir(self, tmp_path):
        sub = tmp_path / "nested"
        sub.mkdir()
        (sub / "script.json").write_text("[]", encoding="utf-8")
        cfg = load_config(
            write(sub, '[endpoints.mock]\ntype = "scripted"\nscript = "script.json"')
        )
        build_client(cfg, "mock")  # no error resolving the path

    def test_unknown_endpoint_name(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        with pytest.raises(ConfigError):
            build_client(cfg, "ghost")


class TestBuildEstimator:
    def test_heuristic_needs_no_endpoint(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        backend = build_estimator(cfg)
        assert backend.kind is EstimatorKind.HEURISTIC

    def test_model_backed_requires_endpoint_reference(self, tmp_path):
        cfg = load_config(write(tmp_path, '[estimator]\nkind = "remote"'))
        with pytest.raises(ConfigError, match="endpoint"):
            build_estimator(cfg)

    def test_feature_mask_carried(self, tmp_path):
        cfg = load_config(write(tmp_path, '[estimator]\nkind = "heuristic"\nmask = ["semantic"]'))
        backend = build_estimator(cfg)
        assert backend.feature_mask == frozenset({"semantic"})
