from __future__ import annotations

import random

import pytest

from tracerepair.consensus import (
    Critique,
    agreement_weight,
    consensus_score,
    parse_critique,
    validate_attribution,
)
from tracerepair.gateway import ScriptedGateway
from tracerepair.trace_model import StepType, TaskSpec

from conftest import build_trace


class TestAgreementWeight:
    def test_published_mapping(self):
        assert agreement_weight("AGREE") == 1.0
        assert agreement_weight("PARTIAL") == 0.5
        assert agreement_weight("DISAGREE") == 0.0

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            agreement_weight("MAYBE")


def critique(agent: str, label: str, confidence: float) -> Critique:
    return Critique(agent=agent, label=label, confidence=confidence)


class TestConsensusScore:
    def test_maximal_case(self):
        score = consensus_score(1, [critique("B", "AGREE", 1.0), critique("C", "AGREE", 1.0)])
        assert score == pytest.approx(1.0, abs=1e-12)

    def test_mixed_case(self):
        score = consensus_score(1, [critique("B", "PARTIAL", 0.8), critique("C", "DISAGREE", 0.6)])
        assert score == pytest.approx((1 + 0.4 + 0.0) / 3, abs=1e-12)

    def test_zero_crs_with_agreement(self):
        score = consensus_score(0, [critique("B", "AGREE", 0.9), critique("C", "AGREE", 0.9)])
        assert score == pytest.approx(0.6, abs=1e-12)

    def test_missing_agent_rejected(self):
        with pytest.raises(ValueError, match="B and C"):
            consensus_score(1, [critique("B", "AGREE", 1.0), critique("B", "AGREE", 1.0)])

    def test_bad_crs_rejected(self):
        with pytest.raises(ValueError):
            consensus_score(2, [critique("B", "AGREE", 1.0), critique("C", "AGREE", 1.0)])

    def test_range_over_random_inputs(self):
        rng = random.Random(1)
        labels = ["AGREE", "PARTIAL", "DISAGREE"]
        for _ in range(300):
            score = consensus_score(
                rng.randint(0, 1),
                [
                    critique("B", rng.choice(labels), rng.random()),
                    critique("C", rng.choice(labels), rng.random()),
                ],
            )
            assert 0.0 <= score <= 1.0

    def test_monotone_in_confidence_and_label(self):
        base = consensus_score(1, [critique("B", "PARTIAL", 0.5), critique("C", "AGREE", 0.4)])
        higher_conf = consensus_score(1, [critique("B", "PARTIAL", 0.9), critique("C", "AGREE", 0.4)])
        upgraded = consensus_score(1, [critique("B", "AGREE", 0.5), critique("C", "AGREE", 0.4)])
        assert higher_conf >= base
        assert upgraded >= base

    def test_confidence_clamped_at_parse_time(self):
        assert critique("B", "AGREE", 1.7).confidence == 1.0
        assert critique("B", "AGREE", -0.3).confidence == 0.0


class TestParseCritique:
    def test_well_formed_reply(self):
        reply = "LABEL: AGREE\nCONFIDENCE: 0.9\nRATIONALE: the step is clearly wrong"
        parsed, warned = parse_critique("B", reply)
        assert not warned
        assert parsed.label == "AGREE" and parsed.confidence == 0.9
        assert "clearly wrong" in parsed.rationale

    def test_case_insensitive_label(self):
        parsed, warned = parse_critique("C", "label: disagree\nCONFIDENCE: 1")
        assert not warned and parsed.label == "DISAGREE"

    def test_unparseable_falls_back_to_partial(self):
        parsed, warned = parse_critique("B", "hmm, hard to say")
        assert warned
        assert parsed.label == "PARTIAL" and parsed.confidence == 0.5

    def test_out_of_range_confidence_clamped(self):
        parsed, _ = parse_critique("B", "LABEL: AGREE\nCONFIDENCE: 3.5")
        assert parsed.confidence == 1.0


@pytest.fixture
def flagged_trace():
    return build_trace(
        [
            (StepType.REASONING, "sum the two batches"),
            (StepType.TOOL_CALL, "calc\n6*13"),
            (StepType.TOOL_RESPONSE, "78"),
            (StepType.FINAL_ANSWER, "78"),
        ],
        task=TaskSpec(problem_statement="how many", gold_answer="72"),
    )


def reply(label: str, confidence: float) -> str:
    return f"LABEL: {label}\nCONFIDENCE: {confidence}\nRATIONALE: because"


class TestValidateAttribution:
    def test_both_agree_retains(self, flagged_trace):
        gw = ScriptedGateway([reply("AGREE", 0.9), reply("AGREE", 0.9)])
        result = validate_attribution(flagged_trace, 1, gw)
        assert result.retained
        assert result.score == pytest.approx((1 + 0.9 + 0.9) / 3, abs=1e-12)
        assert gw.calls == 2

    def test_both_disagree_drops(self, flagged_trace):
        gw = ScriptedGateway([reply("DISAGREE", 1.0), reply("DISAGREE", 1.0)])
        result = validate_attribution(flagged_trace, 1, gw)
        assert not result.retained
        assert result.score == pytest.approx(1 / 3, abs=1e-12)

    def test_boundary_score_counts_as_retained(self, flagged_trace):
        # crs=1, B=(AGREE, 0.5), C=(DISAGREE, anything) -> exactly 0.5
        gw = ScriptedGateway([reply("AGREE", 0.5), reply("DISAGREE", 0.9)])
        result = validate_attribution(flagged_trace, 1, gw, tau_c=0.5)
        assert result.score == pytest.approx(0.5, abs=1e-12)
        assert result.retained

    def test_unparseable_b_reply_uses_fallback_and_flags(self, flagged_trace):
        gw = ScriptedGateway(["no structured verdict", reply("AGREE", 1.0)])
        result = validate_attribution(flagged_trace, 1, gw)
        assert result.parse_warnings
        assert result.critiques[0].label == "PARTIAL"
        assert result.score == pytest.approx((1 + 0.25 + 1.0) / 3, abs=1e-12)

    def test_critic_c_sees_bs_judgment(self, flagged_trace):
        gw = ScriptedGateway([reply("PARTIAL", 0.7), reply("AGREE", 0.8)])
        validate_attribution(flagged_trace, 1, gw)
        prompt_b, prompt_c = gw.prompts
        assert "LABEL: PARTIAL" in prompt_c  # B's full reply is embedded
        assert "LABEL: PARTIAL" not in prompt_b

    def test_requires_gold(self, flagged_trace):
        t = build_trace(
            [(StepType.REASONING, "r"), (StepType.FINAL_ANSWER, "1")],
            task=TaskSpec(problem_statement="p"),
        )
        with pytest.raises(ValueError):
            validate_attribution(t, 0, ScriptedGateway([]))
