import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imgset.clients import ChatMessage, ChatRequest, MockChatClient, request_digest
from imgset.model.data import NULL_ID
from imgset.recaption import (
    Instruction,
    RecaptionError,
    SetSizeError,
    consist,
    fallback_parse,
    parse_instruction,
    recap,
    recaption,
    tokenize_for_toy,
)

EXAMPLE = (
    "the first image shows a red square; the second image shows a red circle. "
    "keep the same color."
)


class TestFallbackParse:
    def test_example_split(self):
        entities, consistency = fallback_parse(EXAMPLE)
        assert entities == ["a red square", "a red circle"]
        assert consistency == ["keep the same color"]

    def test_numbered_enumeration(self):
        e, _ = fallback_parse("1. a cat on a mat. 2) a dog in fog. 3: a bird")
        assert e == ["a cat on a mat", "a dog in fog", "a bird"]

    def test_ordinal_variants(self):
        e, _ = fallback_parse(
            "The First image depicts a tree. the second picture is a rock. "
            "the third panel contains a river."
        )
        assert e == ["a tree", "a rock", "a river"]

    def test_consistency_keywords(self):
        _, c = fallback_parse(
            "the first image shows x. Maintain a consistent style. "
            "Preserve identity throughout!"
        )
        assert len(c) == 2

    def test_unparseable_yields_empty(self):
        e, c = fallback_parse("hello world nothing enumerated here")
        assert e == [] and c == []


class TestParseInstruction:
    def test_size_agreement(self):
        e, c = parse_instruction(Instruction(text=EXAMPLE, set_size=2))
        assert len(e) == 2

    def test_size_mismatch_raises(self):
        with pytest.raises(SetSizeError):
            parse_instruction(Instruction(text=EXAMPLE, set_size=3))

    def test_no_size_no_enumeration_raises(self):
        with pytest.raises(SetSizeError):
            parse_instruction(Instruction(text="draw something nice please ok"))

    def test_empty_instruction_rejected(self):
        with pytest.raises(RecaptionError):
            Instruction(text="   ")

    def test_size_bounds(self):
        with pytest.raises(RecaptionError):
            Instruction(text="x", set_size=9)
        with pytest.raises(RecaptionError):
            Instruction(text="x", set_size=0)


class TestExpansion:
    def test_recap_appends_consistency(self):
        assert recap("a red square", ["keep the same color"]) == \
            "a red square, keep the same color"

    def test_recap_without_consistency(self):
        assert recap("a red square", []) == "a red square"

    def test_recap_empty_entity_raises(self):
        with pytest.raises(RecaptionError):
            recap("  ", [])

    def test_consist_joins(self):
        assert consist(["same color", "same style"]) == "same color, same style"
        assert consist([]) == ""

    def test_full_recaption(self):
        r = recaption(Instruction(text=EXAMPLE))
        assert r.n == 2
        assert r.prompts == (
            "a red square, keep the same color",
            "a red circle, keep the same color",
        )
        assert r.global_prompt == "keep the same color"


class TestClientPath:
    def _fixture_for(self, messages, payload):
        req = ChatRequest(model="recaption", messages=tuple(messages))
        return {request_digest(req): {"text": payload}}

    def test_client_parse_used(self):
        from importlib import resources

        system = resources.files("imgset").joinpath(
            "data/prompts/recaption_system.txt"
        ).read_text()
        msgs = [ChatMessage("system", system), ChatMessage("user", EXAMPLE)]
        payload = json.dumps({"entities": ["a big red square", "a big red circle"],
                              "consistency": ["identical color"]})
        client = MockChatClient(self._fixture_for(msgs, payload))
        e, c = parse_instruction(Instruction(text=EXAMPLE, set_size=2), client=client)
        assert e == ["a big red square", "a big red circle"]
        assert c == ["identical color"]

    def test_malformed_then_repaired(self):
        from importlib import resources

        system = resources.files("imgset").joinpath(
            "data/prompts/recaption_system.txt"
        ).read_text()
        msgs = [ChatMessage("system", system), ChatMessage("user", EXAMPLE)]
        first = {"text": "sorry, here you go:"}
        repair_msgs = msgs + [
            ChatMessage("assistant", "sorry, here you go:"),
            ChatMessage(
                "user",
                "The previous reply was not the required strict JSON object "
                '{"entities": [...], "consistency": [...]}. Reply with only that object.',
            ),
        ]
        good = json.dumps({"entities": ["a", "b"], "consistency": []})
        fixtures = {
            request_digest(ChatRequest(model="recaption", messages=tuple(msgs))): first,
            request_digest(ChatRequest(model="recaption", messages=tuple(repair_msgs))): {"text": good},
        }
        client = MockChatClient(fixtures)
        e, c = parse_instruction(Instruction(text=EXAMPLE, set_size=2), client=client)
        assert e == ["a", "b"] and c == []


class TestToyTokenizer:
    @pytest.mark.parametrize(
        "text,ids",
        [
            ("a red square", [1, 4]),
            ("a red square, keep the same color", [1, 4]),
            ("the blue circle", [2, 6]),
            ("triangle", [3]),
            ("green", [5]),
            ("keep the same color", [NULL_ID]),
            ("", [NULL_ID]),
            ("a RED Square please", [1, 4]),
        ],
    )
    def test_mapping(self, text, ids):
        assert tokenize_for_toy(text) == ids

    def test_first_match_wins(self):
        assert tokenize_for_toy("a red square next to a blue circle") == [1, 4]


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=300))
def test_fallback_parse_never_raises(text):
    entities, consistency = fallback_parse(text)
    assert isinstance(entities, list) and isinstance(consistency, list)


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=120))
def test_tokenizer_total(text):
    ids = tokenize_for_toy(text)
    assert ids and all(0 <= i <= 6 for i in ids)
