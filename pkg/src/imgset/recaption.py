"""Structured recaption: instruction -> per-image prompts + global prompt.

An instruction is first parsed into per-image content entries and set-wide
consistency requirements, then expanded into a detailed prompt per image
and one global consistency prompt.  A chat-model client does the parsing
and expansion when available; a deterministic rule-based fallback covers
offline runs (and is what the test suite exercises).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

from .clients import ChatMessage, ChatRequest
from .model.data import COLORS, NULL_ID, SHAPES

MAX_SET_SIZE = 8

CONSISTENCY_KEYWORDS = ("same", "consistent", "consistency", "style", "identity")

_ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth")
_ORDINAL_RE = re.compile(
    r"^(?:the\s+)?(" + "|".join(_ORDINALS) + r")\s+(?:image|picture|panel)\s*"
    r"(?:shows|is|depicts|features|contains|of)?\s*[:,]?\s*(.+)$",
    re.IGNORECASE | re.DOTALL,
)
_NUMBERED_RE = re.compile(r"^\s*(\d+)\s*[.):]\s*(.+)$", re.DOTALL)


class RecaptionError(ValueError):
    """Structured parsing of an instruction failed."""


class SetSizeError(RecaptionError):
    """Parsed image count disagrees with the requested set size."""


@dataclass(frozen=True)
class Instruction:
    text: str
    set_size: int | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise RecaptionError("instruction text is empty")
        if self.set_size is not None and not (1 <= self.set_size <= MAX_SET_SIZE):
            raise RecaptionError(
                f"set size must lie in [1, {MAX_SET_SIZE}], got {self.set_size}"
            )


@dataclass(frozen=True)
class RecaptionResult:
    entities: tuple[str, ...]  # per-image content
    consistency: tuple[str, ...]  # set-wide requirements
    prompts: tuple[str, ...]  # expanded per-image prompts
    global_prompt: str

    @property
    def n(self) -> int:
        return len(self.entities)


def _load_prompt_asset(name: str) -> str:
    return resources.files("imgset").joinpath(f"data/prompts/{name}").read_text()


def _is_consistency_sentence(sentence: str) -> bool:
    words = re.findall(r"[a-z]+", sentence.lower())
    return any(kw in words for kw in CONSISTENCY_KEYWORDS)


def fallback_parse(text: str) -> tuple[list[str], list[str]]:
    """Deterministic enumerator-based split of an instruction into (E, C).

    Never raises on arbitrary input; an unparseable instruction simply
    yields empty lists.
    """
    entities: list[str] = []
    consistency: list[str] = []
    # the lookbehind keeps "1." style enumerators out of the sentence split
    for sentence in re.split(r"(?<![0-9])[.!?]+", text):
        sentence = sentence.strip()
        if not sentence:
            continue
        if _is_consistency_sentence(sentence):
            consistency.append(sentence)
            continue
        for segment in sentence.split(";"):
            segment = segment.strip()
            if not segment:
                continue
            m = _ORDINAL_RE.match(segment) or _NUMBERED_RE.match(segment)
            if m:
                content = m.group(2).strip()
                if content:
                    entities.append(content)
    return entities, consistency


def _validate_structured(obj) -> tuple[list[str], list[str]]:
    if not isinstance(obj, dict):
        raise RecaptionError("structured recaption output is not a JSON object")
    entities = obj.get("entities")
    consistency = obj.get("consistency", [])
    if not isinstance(entities, list) or not entities:
        raise RecaptionError("structured output lacks a non-empty 'entities' list")
    if not all(isinstance(e, str) and e.strip() for e in entities):
        raise RecaptionError("'entities' must be non-empty strings")
    if not isinstance(consistency, list) or not all(isinstance(c, str) for c in consistency):
        raise RecaptionError("'consistency' must be a list of strings")
    return [e.strip() for e in entities], [c.strip() for c in consistency if c.strip()]


def _client_parse(instruction: Instruction, client) -> tuple[list[str], list[str]]:
    system = _load_prompt_asset("recaption_system.txt")
    messages = [
        ChatMessage("system", system),
        ChatMessage("user", instruction.text),
    ]
    for attempt in range(2):  # one repair retry
        response = client.chat(ChatRequest(model="recaption", messages=tuple(messages)))
        try:
            return _validate_structured(json.loads(response.text))
        except (json.JSONDecodeError, RecaptionError) as exc:
            if attempt == 1:
                raise RecaptionError(
                    f"client produced malformed structured output after retry: {exc}"
                ) from exc
            messages = messages + [
                ChatMessage("assistant", response.text),
                ChatMessage(
                    "user",
                    "The previous reply was not the required strict JSON object "
                    '{"entities": [...], "consistency": [...]}. Reply with only that object.',
                ),
            ]
    raise AssertionError("unreachable")


def parse_instruction(instruction: Instruction, client=None) -> tuple[list[str], list[str]]:
    """Split an instruction into per-image entities and consistency requirements."""
    if client is not None:
        entities, consistency = _client_parse(instruction, client)
    else:
        entities, consistency = fallback_parse(instruction.text)
    n = instruction.set_size
    if n is None:
        if not entities:
            raise SetSizeError(
                "no explicit set size given and no parseable enumeration found"
            )
    elif len(entities) != n:
        raise SetSizeError(
            f"instruction enumerates {len(entities)} images but set size {n} was requested"
        )
    if len(entities) > MAX_SET_SIZE:
        raise SetSizeError(f"parsed {len(entities)} images, maximum is {MAX_SET_SIZE}")
    return entities, consistency


def recap(entity: str, consistency, instruction_text: str = "", client=None) -> str:
    """Expand one image's content entry into its detailed prompt."""
    if not entity or not entity.strip():
        raise RecaptionError("cannot expand an empty content entry")
    if client is not None:
        system = _load_prompt_asset("recap_system.txt")
        response = client.chat(
            ChatRequest(
                model="recaption",
                messages=(
                    ChatMessage("system", system),
                    ChatMessage(
                        "user",
                        json.dumps({
                            "entity": entity,
                            "consistency": list(consistency),
                            "instruction": instruction_text,
                        }),
                    ),
                ),
            )
        )
        return response.text.strip()
    joined = ", ".join(consistency)
    return f"{entity}, {joined}" if joined else entity


def consist(consistency, instruction_text: str = "", client=None) -> str:
    """Merge the consistency requirements into the global prompt.

    An empty requirement list yields an empty global prompt; callers must
    treat that set as unconstrained.
    """
    if client is not None:
        system = _load_prompt_asset("consist_system.txt")
        response = client.chat(
            ChatRequest(
                model="recaption",
                messages=(
                    ChatMessage("system", system),
                    ChatMessage(
                        "user",
                        json.dumps({
                            "consistency": list(consistency),
                            "instruction": instruction_text,
                        }),
                    ),
                ),
            )
        )
        return response.text.strip()
    return ", ".join(consistency)


def recaption(instruction: Instruction, client=None) -> RecaptionResult:
    """Full structured recaption of an instruction."""
    entities, consistency = parse_instruction(instruction, client=client)
    prompts = tuple(
        recap(e, consistency, instruction.text, client=client) for e in entities
    )
    g = consist(consistency, instruction.text, client=client)
    return RecaptionResult(
        entities=tuple(entities),
        consistency=tuple(consistency),
        prompts=prompts,
        global_prompt=g,
    )


def tokenize_for_toy(text: str) -> list[int]:
    """Map free text onto the toy vocabulary: [shape, color], first match wins.

    Unknown words are dropped; a text with no known keyword becomes the
    null prompt.
    """
    words = re.findall(r"[a-z]+", text.lower())
    shape_id = next((SHAPES[w] for w in words if w in SHAPES), None)
    color_id = next((COLORS[w] for w in words if w in COLORS), None)
    ids = [tid for tid in (shape_id, color_id) if tid is not None]
    return ids if ids else [NULL_ID]
