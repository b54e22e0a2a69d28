"""Set-level evaluation pipeline.

Consistency is judged along identity / style / logic by asking a VLM
yes-or-no questions about sequentially paired images and using the Yes
probability as a graded score.  Alignment is judged per image along
entity / attribute / relation.  Aesthetics is delegated to an external
scorer.  Everything is normalized to [0, 1] and aggregated into a
weighted holistic average (0.2 aesthetics, 0.3 alignment, 0.5 consistency).
"""

from __future__ import annotations

import base64
import io
import json
import logging
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .clients import ChatMessage, ChatRequest, ScoringError, yes_probability

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
EVAL_SIZE = 512

CONSISTENCY_DIMENSIONS = ("identity", "style", "logic")
ALIGNMENT_PERSPECTIVES = ("entity", "attribute", "relation")

WEIGHT_AESTHETICS = 0.2
WEIGHT_ALIGNMENT = 0.3
WEIGHT_CONSISTENCY = 0.5

MIN_CRITERIA = 2
MAX_CRITERIA = 4


class CriteriaError(ValueError):
    """Criteria generation produced fewer than the required valid criteria."""


@dataclass(frozen=True)
class Criterion:
    dimension: str  # consistency dimension or alignment perspective
    question: str
    target_index: int | None = None  # alignment only

    def __post_init__(self):
        if self.dimension not in CONSISTENCY_DIMENSIONS + ALIGNMENT_PERSPECTIVES:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        if not self.question or not self.question.strip().endswith("?"):
            raise ValueError(f"criterion question must be non-empty and end with '?': {self.question!r}")


@dataclass(frozen=True)
class ScoreReport:
    aesthetics: float
    alignment: dict  # {"entity": x, "attribute": y, "relation": z}
    consistency: dict  # {"identity": x, "style": y, "logic": z}
    holistic: float

    def __post_init__(self):
        expected = holistic(
            self.aesthetics,
            [self.alignment[p] for p in ALIGNMENT_PERSPECTIVES],
            [self.consistency[d] for d in CONSISTENCY_DIMENSIONS],
        )
        if abs(expected - self.holistic) > 1e-9:
            raise ValueError(
                f"holistic field {self.holistic} inconsistent with components ({expected})"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": REPORT_SCHEMA_VERSION,
                "aesthetics": self.aesthetics,
                "alignment": {p: self.alignment[p] for p in ALIGNMENT_PERSPECTIVES},
                "consistency": {d: self.consistency[d] for d in CONSISTENCY_DIMENSIONS},
                "holistic": self.holistic,
            },
            indent=2,
        )

    def to_table(self, label: str = "result") -> str:
        cols = ["Model", "Aesthetics", "Entity", "Attribute", "Relation",
                "Identity", "Style", "Logic", "Avg"]
        vals = [label, f"{self.aesthetics:.3f}"]
        vals += [f"{self.alignment[p]:.3f}" for p in ALIGNMENT_PERSPECTIVES]
        vals += [f"{self.consistency[d]:.3f}" for d in CONSISTENCY_DIMENSIONS]
        vals += [f"{self.holistic:.3f}"]
        widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
        header = "  ".join(c.ljust(w) for c, w in zip(cols, widths))
        row = "  ".join(v.ljust(w) for v, w in zip(vals, widths))
        return header + "\n" + row + "\n"


def make_report(aesthetics, alignment, consistency) -> ScoreReport:
    h = holistic(
        aesthetics,
        [alignment[p] for p in ALIGNMENT_PERSPECTIVES],
        [consistency[d] for d in CONSISTENCY_DIMENSIONS],
    )
    return ScoreReport(aesthetics=aesthetics, alignment=dict(alignment),
                       consistency=dict(consistency), holistic=h)


# -- aggregation -------------------------------------------------------


def holistic(aesthetics: float, alignment, consistency) -> float:
    """0.2 * aesthetics + 0.3 * mean(alignment) + 0.5 * mean(consistency)."""
    values = [aesthetics, *alignment, *consistency]
    for v in values:
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"score {v} outside [0, 1]")
    if len(list(alignment)) != 3 or len(list(consistency)) != 3:
        raise ValueError("alignment and consistency each need exactly 3 values")
    return (
        WEIGHT_AESTHETICS * aesthetics
        + WEIGHT_ALIGNMENT * float(np.mean(list(alignment)))
        + WEIGHT_CONSISTENCY * float(np.mean(list(consistency)))
    )


def sequential_pairs(n: int) -> list[tuple[int, int]]:
    """Adjacent ordered pairs (0,1), (1,2), ...; undefined below two images."""
    if n < 2:
        raise ValueError(f"consistency is undefined for a {n}-image set (need >= 2)")
    return [(i, i + 1) for i in range(n - 1)]


# -- image plumbing ----------------------------------------------------


def resize_for_eval(image: np.ndarray, size: int = EVAL_SIZE) -> np.ndarray:
    """Bilinear resize to size x size (align-corners), values clamped to [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
    h, w = image.shape[:2]
    if (h, w) == (size, size):
        return np.clip(image, 0.0, 1.0)
    out = np.empty((size, size, 3), dtype=np.float64)
    rs = np.linspace(0, h - 1, size) if h > 1 else np.zeros(size)
    cs = np.linspace(0, w - 1, size) if w > 1 else np.zeros(size)
    r0 = np.clip(np.floor(rs).astype(int), 0, h - 1)
    r1 = np.clip(r0 + 1, 0, h - 1)
    c0 = np.clip(np.floor(cs).astype(int), 0, w - 1)
    c1 = np.clip(c0 + 1, 0, w - 1)
    fr = (rs - r0)[:, None, None]
    fc = (cs - c0)[None, :, None]
    top = image[r0][:, c0] * (1 - fc) + image[r0][:, c1] * fc
    bot = image[r1][:, c0] * (1 - fc) + image[r1][:, c1] * fc
    out = top * (1 - fr) + bot * fr
    return np.clip(out, 0.0, 1.0)


def image_to_base64(image: np.ndarray) -> str:
    from PIL import Image

    arr = (np.clip(np.asarray(image), 0.0, 1.0) * 255.0).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


# -- criteria ----------------------------------------------------------


def _validate_criteria_payload(obj, dimension: str) -> list[Criterion]:
    if not isinstance(obj, dict) or not isinstance(obj.get("criteria"), list):
        raise CriteriaError("criteria output is not a JSON object with a 'criteria' list")
    out = []
    for q in obj["criteria"]:
        if isinstance(q, str) and q.strip().endswith("?"):
            out.append(Criterion(dimension=dimension, question=q.strip()))
    if len(out) < MIN_CRITERIA:
        raise CriteriaError(
            f"only {len(out)} valid criteria for dimension {dimension!r} "
            f"(need at least {MIN_CRITERIA})"
        )
    if len(out) > MAX_CRITERIA:
        log.warning(
            "clamping %d criteria to %d for dimension %s", len(out), MAX_CRITERIA, dimension
        )
        out = out[:MAX_CRITERIA]
    return out


def generate_criteria(instruction_text: str, dimension: str, client) -> list[Criterion]:
    """Ask the LLM for 2-4 yes/no criteria for one evaluation dimension."""
    if dimension not in CONSISTENCY_DIMENSIONS + ALIGNMENT_PERSPECTIVES:
        raise ValueError(f"unknown dimension {dimension!r}")
    system = resources.files("imgset").joinpath("data/prompts/criteria_system.txt").read_text()
    messages = [
        ChatMessage("system", system),
        ChatMessage("user", json.dumps({"dimension": dimension, "instruction": instruction_text})),
    ]
    last_exc = None
    for attempt in range(2):  # one repair retry
        response = client.chat(ChatRequest(model="criteria", messages=tuple(messages)))
        try:
            return _validate_criteria_payload(json.loads(response.text), dimension)
        except (json.JSONDecodeError, CriteriaError) as exc:
            last_exc = exc
            messages = messages + [
                ChatMessage("assistant", response.text),
                ChatMessage(
                    "user",
                    'Reply with only the strict JSON object {"criteria": ["...?", ...]} '
                    f"containing {MIN_CRITERIA}-{MAX_CRITERIA} yes/no questions.",
                ),
            ]
    raise CriteriaError(f"criteria generation failed after retry: {last_exc}")


def fixture_criteria(fixtures: dict, dimension: str) -> list[Criterion]:
    """Versioned canned criteria: {dimension: [question, ...]}."""
    questions = fixtures.get(dimension, [])
    out = [Criterion(dimension=dimension, question=q) for q in questions]
    if len(out) < MIN_CRITERIA:
        raise CriteriaError(f"fixture provides {len(out)} criteria for {dimension!r}")
    return out[:MAX_CRITERIA]


# -- scoring -----------------------------------------------------------


def _judge(vlm_client, question: str, images) -> float:
    request = ChatRequest(
        model="judge",
        messages=(
            ChatMessage(
                "user",
                f"{question} Answer Yes or No.",
                images=tuple(image_to_base64(img) for img in images),
            ),
        ),
        max_tokens=1,
        want_logprobs=True,
    )
    return yes_probability(vlm_client.chat(request))


def consistency_dimension_score(images, criteria, vlm_client) -> float:
    """Mean Yes-probability over every (sequential pair, criterion) cell."""
    images = [resize_for_eval(img) for img in images]
    if not criteria:
        raise ValueError("need at least one criterion")
    pairs = sequential_pairs(len(images))
    cells = []
    for a, b in pairs:
        for crit in criteria:
            try:
                cells.append(_judge(vlm_client, crit.question, [images[a], images[b]]))
            except ScoringError as exc:
                raise ScoringError(
                    f"pair ({a},{b}) criterion {crit.question!r}: {exc}"
                ) from exc
    return float(np.mean(cells))


def alignment_score(image, criteria, vlm_client) -> float:
    """Mean Yes-probability of one image against its criteria."""
    image = resize_for_eval(image)
    if not criteria:
        raise ValueError("need at least one criterion")
    cells = []
    for crit in criteria:
        try:
            cells.append(_judge(vlm_client, crit.question, [image]))
        except ScoringError as exc:
            raise ScoringError(f"criterion {crit.question!r}: {exc}") from exc
    return float(np.mean(cells))


def alignment_set_score(images, criteria_per_image, vlm_client) -> float:
    """Set-level perspective score: mean of per-image alignment scores."""
    if len(images) != len(criteria_per_image):
        raise ValueError("one criteria list per image is required")
    scores = [
        alignment_score(img, crits, vlm_client)
        for img, crits in zip(images, criteria_per_image)
    ]
    return float(np.mean(scores))


def aesthetics_score(images, scorer) -> float:
    """Mean of per-image scores delegated to an external aesthetics scorer."""
    images = list(images)
    if not images:
        raise ValueError("cannot score an empty image set")
    scores = [float(scorer.score_image(resize_for_eval(img))) for img in images]
    for s in scores:
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"aesthetics score {s} outside [0, 1]")
    return float(np.mean(scores))


class SequenceJudgeClient:
    """Offline VLM judge replaying a sequence of Yes probabilities.

    Each chat call consumes the next probability p and answers with
    first-token candidates ("Yes", log p) / ("No", log(1-p)), so the full
    logprob scoring path is exercised without a server.
    """

    def __init__(self, probabilities):
        import math

        self._lps = []
        for p in probabilities:
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability {p} outside [0, 1]")
            yes_lp = math.log(p) if p > 0 else float("-inf")
            no_lp = math.log1p(-p) if p < 1 else float("-inf")
            self._lps.append((yes_lp, no_lp))
        self._i = 0
        self.calls = 0

    def chat(self, request: ChatRequest):
        from .clients import ChatResponse

        request.validate()
        if self._i >= len(self._lps):
            raise ValueError("judge fixture exhausted")
        yes_lp, no_lp = self._lps[self._i]
        self._i += 1
        self.calls += 1
        text = "Yes" if yes_lp >= no_lp else "No"
        return ChatResponse(
            text=text, top_candidates=(("Yes", yes_lp), ("No", no_lp), (".", -20.0))
        )


class FixtureAestheticsScorer:
    """Replays a fixed per-image score sequence."""

    def __init__(self, scores):
        self._scores = list(scores)
        self._i = 0

    def score_image(self, image) -> float:
        if self._i >= len(self._scores):
            raise ValueError("aesthetics fixture exhausted")
        s = self._scores[self._i]
        self._i += 1
        return float(s)


def evaluate_set(
    images,
    prompts,
    instruction_text: str,
    vlm_client,
    aesthetics_scorer,
    criteria_client=None,
    criteria_fixtures: dict | None = None,
) -> ScoreReport:
    """Full pipeline: criteria -> pairwise/per-image scoring -> report.

    Alignment questions target each sub-image's recaptioned prompt (one
    criteria set per image); consistency criteria come from the raw
    instruction.  Exactly one of criteria_client / criteria_fixtures must
    be provided.
    """
    if (criteria_client is None) == (criteria_fixtures is None):
        raise ValueError("provide exactly one of criteria_client or criteria_fixtures")

    def criteria_for(text, dim):
        if criteria_client is not None:
            return generate_criteria(text, dim, criteria_client)
        return fixture_criteria(criteria_fixtures, dim)

    consistency = {
        dim: consistency_dimension_score(
            images, criteria_for(instruction_text, dim), vlm_client
        )
        for dim in CONSISTENCY_DIMENSIONS
    }
    alignment = {}
    for persp in ALIGNMENT_PERSPECTIVES:
        per_image = [criteria_for(p, persp) for p in prompts]
        alignment[persp] = alignment_set_score(images, per_image, vlm_client)
    aes = aesthetics_score(images, aesthetics_scorer)
    return make_report(aes, alignment, consistency)
