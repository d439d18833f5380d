import json

import pytest

from adasolve.estimator import (
    EstimateParseError,
    EstimatorBackend,
    EstimatorKind,
    MODEL_BACKED_KINDS,
    NoObjectFoundError,
    estimate,
    heuristic_features,
    parse_profile_response,
)
from adasolve.llmclient import ScriptEntry, scripted_client
from adasolve.profile import ProfileValidationError, score

from conftest import base_raw, profile_reply


class TestHeuristicGolden:
    def test_bakery_matches_golden(self, bakery_golden):
        profile = heuristic_features(bakery_golden["text"])
        assert profile.as_dict() == pytest.approx(bakery_golden["profile"])

    def test_bakery_single_multiplication(self, bakery_golden):
        profile = heuristic_features(bakery_golden["text"])
        assert profile.estimated_steps == 1
        assert profile.operations == 1

    def test_bakery_scores_easy(self, bakery_golden):
        result = score(heuristic_features(bakery_golden["text"]))
        assert result.rho < 3.0

    def test_multirate_matches_golden(self, multirate_golden):
        profile = heuristic_features(multirate_golden["text"])
        assert profile.as_dict() == pytest.approx(multirate_golden["profile"])

    def test_multirate_gates_in(self, multirate_golden):
        profile = heuristic_features(multirate_golden["text"])
        assert profile.estimated_steps >= 3
        assert score(profile).rho >= 3.0


class TestHeuristicRules:
    def test_no_numerals(self):
        profile = heuristic_features("Describe the weather in words only.")
        assert profile.operations == 0
        assert profile.steps == 0

    def test_duplicated_text_keeps_distinct_entities(self):
        text = "Alice pays Bob 5 dollars."
        once = heuristic_features(text)
        twice = heuristic_features(text + " " + text)
        assert once.entities == twice.entities == 1

    def test_deterministic(self):
        text = "Sam adds 3 apples and 4 pears, then splits them between 2 bags."
        assert heuristic_features(text) == heuristic_features(text)

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            heuristic_features("   ")

    def test_estimate_with_heuristic_backend(self, bakery_golden):
        backend = EstimatorBackend(kind=EstimatorKind.HEURISTIC)
        result = estimate(bakery_golden["text"], backend)
        assert result.profile == heuristic_features(bakery_golden["text"])
        assert result.token_usage.total_tokens == 0
        assert result.repair_attempts == 0


class TestParseProfileResponse:
    def test_exact_object(self):
        raw = json.dumps(base_raw(steps=3))
        assert parse_profile_response(raw).steps == 3

    def test_object_embedded_in_prose(self):
        bare = json.dumps(base_raw(steps=5))
        wrapped = f"Sure! Here is the profile you asked for:\n{bare}\nHope that helps."
        assert parse_profile_response(wrapped) == parse_profile_response(bare)

    def test_type_violation_fails_validation(self):
        raw = json.dumps({**base_raw(), "f_7B": "high"})
        with pytest.raises(ProfileValidationError):
            parse_profile_response(raw)

    def test_no_object(self):
        with pytest.raises(NoObjectFoundError):
            parse_profile_response("no json here at all")

    def test_schema_key_tolerated(self):
        raw = json.dumps({"schema": "profile-v1", **base_raw(steps=2)})
        assert parse_profile_response(raw).steps == 2

    def test_skips_malformed_prefix_object(self):
        good = json.dumps(base_raw(steps=4))
        assert parse_profile_response("{not json} " + good).steps == 4


class TestBackendInvariants:
    def test_model_backed_requires_endpoint(self):
        for kind in MODEL_BACKED_KINDS:
            with pytest.raises(ValueError):
                EstimatorBackend(kind=kind)

    def test_heuristic_takes_no_endpoint(self):
        client = scripted_client([ScriptEntry(reply="x")])
        with pytest.raises(ValueError):
            EstimatorBackend(kind=EstimatorKind.HEURISTIC, endpoint=client)

    def test_labels(self):
        backend = EstimatorBackend(kind=EstimatorKind.HEURISTIC, feature_mask=frozenset({"semantic"}))
        assert backend.label == "heuristic-mask:semantic"


class TestModelBackedEstimate:
    def test_scripted_estimate(self):
        client = scripted_client(
            [ScriptEntry(reply=profile_reply(4.0, estimated_steps=2), prompt_tokens=8, completion_tokens=4)]
        )
        backend = EstimatorBackend(kind=EstimatorKind.REMOTE, endpoint=client)
        result = estimate("What is 2 + 2?", backend)
        assert result.profile.estimated_steps == 2
        assert result.token_usage.total_tokens == 12
        assert result.repair_attempts == 0

    def test_estimator_runs_at_temperature_zero(self):
        client = scripted_client([ScriptEntry(reply=profile_reply(1.0))])
        backend = EstimatorBackend(kind=EstimatorKind.VANILLA_IO, endpoint=client)
        estimate("Am I simple?", backend)
        assert client.transport.requests[0].temperature == 0.0

    def test_repair_loop_recovers(self):
        client = scripted_client(
            [
                ScriptEntry(reply="gibberish", prompt_tokens=5, completion_tokens=1),
                ScriptEntry(reply=profile_reply(2.0), prompt_tokens=6, completion_tokens=2),
            ]
        )
        backend = EstimatorBackend(kind=EstimatorKind.REMOTE, endpoint=client)
        result = estimate("question text", backend)
        assert result.repair_attempts == 1
        assert result.token_usage.total_tokens == 14
        # repair prompt restates the schema and quotes the bad reply
        repair_prompt = client.transport.requests[1].prompt_text
        assert "gibberish" in repair_prompt
        assert "f_7B" in repair_prompt

    def test_unparseable_after_repairs(self):
        client = scripted_client([ScriptEntry(reply="junk", repeat=True, prompt_tokens=1, completion_tokens=1)])
        backend = EstimatorBackend(kind=EstimatorKind.FEW_SHOT_3, endpoint=client)
        with pytest.raises(EstimateParseError) as exc_info:
            estimate("question text", backend)
        assert exc_info.value.repair_attempts == 2
        assert exc_info.value.raw_response == "junk"
        # initial prompt + two repairs
        assert len(client.transport.requests) == 3

    def test_ablation_parity_across_model_backed_kinds(self):
        reply = profile_reply(5.0, estimated_steps=3)
        profiles = []
        for kind in sorted(MODEL_BACKED_KINDS, key=lambda k: k.value):
            client = scripted_client([ScriptEntry(reply=reply, repeat=True)])
            backend = EstimatorBackend(kind=kind, endpoint=client)
            profiles.append(estimate("same question", backend).profile)
        assert all(p == profiles[0] for p in profiles)

    def test_empty_text_rejected(self):
        client = scripted_client([ScriptEntry(reply="x")])
        backend = EstimatorBackend(kind=EstimatorKind.REMOTE, endpoint=client)
        with pytest.raises(ValueError):
            estimate("", backend)
