"""Benchmark corpus tooling: task schema, loader/validator, statistics,
and a synthetic toy-task generator mapped onto the toy vocabulary."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from importlib import resources
from pathlib import Path

from .model.data import COLORS, SHAPES
from .recaption import Instruction, recaption
from .tensor import Rng

GROUPS = (
    "Character Generation",
    "Design Style Generation",
    "Story Generation",
    "Process Generation",
    "Instruction Generation",
)

SUBCATEGORIES = {
    "Character Generation": (
        "Multi-Scenario", "Multi-Expression", "Multi-View", "Multi-Pose", "Portrait Design",
    ),
    "Design Style Generation": (
        "Creative Style", "Poster Design", "Font Design", "IP Product", "Home Decoration",
    ),
    "Story Generation": (
        "Movie Shot", "Comic Story", "Children Book", "News Illustration", "Historical Narrative",
    ),
    "Process Generation": (
        "Growth Process", "Draw Process", "Cooking Process", "Physical Law",
        "Architecture Building", "Evolution Illustration",
    ),
    "Instruction Generation": (
        "Education Illustration", "Historical Panel", "Product Panel",
        "Travel Guide", "Activity Arrange",
    ),
}

MIN_SET_SIZE, MAX_SET_SIZE = 2, 8
MIN_WORDS, MAX_WORDS = 20, 175


class CorpusError(ValueError):
    """Corpus file violates the task schema."""


@dataclass(frozen=True)
class Task:
    id: str
    group: str
    subcategory: str
    instruction: str
    set_size: int
    source: str = "unspecified"

    def __post_init__(self):
        if not self.id:
            raise CorpusError("task id is empty")
        if self.group not in GROUPS:
            raise CorpusError(f"task {self.id}: unknown group {self.group!r}")
        if self.subcategory not in SUBCATEGORIES[self.group]:
            raise CorpusError(
                f"task {self.id}: unknown subcategory {self.subcategory!r} for {self.group!r}"
            )
        if not (MIN_SET_SIZE <= self.set_size <= MAX_SET_SIZE):
            raise CorpusError(
                f"task {self.id}: set_size {self.set_size} outside "
                f"[{MIN_SET_SIZE}, {MAX_SET_SIZE}]"
            )
        words = word_count(self.instruction)
        if not (MIN_WORDS <= words <= MAX_WORDS):
            raise CorpusError(
                f"task {self.id}: instruction word count {words} outside "
                f"[{MIN_WORDS}, {MAX_WORDS}]"
            )


def word_count(text: str) -> int:
    """Whitespace-token count."""
    return len(text.split())


def load_corpus(path) -> list[Task]:
    """Load and validate a JSON array of task objects; duplicate ids rejected."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise CorpusError(f"{path}: top level must be a JSON array of task objects")
    tasks = []
    seen: dict[str, int] = {}
    for i, obj in enumerate(raw):
        if not isinstance(obj, dict):
            raise CorpusError(f"{path}: entry {i} is not an object")
        missing = {"id", "group", "subcategory", "instruction", "set_size"} - set(obj)
        if missing:
            raise CorpusError(f"{path}: entry {i} missing fields {sorted(missing)}")
        try:
            task = Task(
                id=obj["id"],
                group=obj["group"],
                subcategory=obj["subcategory"],
                instruction=obj["instruction"],
                set_size=int(obj["set_size"]),
                source=obj.get("source", "unspecified"),
            )
        except CorpusError as exc:
            raise CorpusError(f"{path}: entry {i}: {exc}") from exc
        if task.id in seen:
            raise CorpusError(
                f"{path}: duplicate id {task.id!r} at entries {seen[task.id]} and {i}"
            )
        seen[task.id] = i
        tasks.append(task)
    return tasks


def save_corpus(tasks, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(t) for t in tasks], fh, indent=2, sort_keys=True)
        fh.write("\n")


def sample_corpus_path():
    """The shipped sample corpus (instructions transcribed from published task examples)."""
    return resources.files("imgset").joinpath("data/sample_corpus.json")


def corpus_stats(tasks) -> dict:
    """Arithmetic means plus per-group / per-subcategory counts."""
    tasks = list(tasks)
    if not tasks:
        raise CorpusError("cannot compute statistics of an empty corpus")
    by_group: dict[str, int] = {}
    by_subcategory: dict[str, int] = {}
    for t in tasks:
        by_group[t.group] = by_group.get(t.group, 0) + 1
        by_subcategory[t.subcategory] = by_subcategory.get(t.subcategory, 0) + 1
    return {
        "task_count": len(tasks),
        "mean_set_size": sum(t.set_size for t in tasks) / len(tasks),
        "mean_word_count": sum(word_count(t.instruction) for t in tasks) / len(tasks),
        "by_group": dict(sorted(by_group.items())),
        "by_subcategory": dict(sorted(by_subcategory.items())),
    }


_ORDINAL_WORDS = ("first", "second", "third", "fourth", "fifth")
_SIZE_WORDS = {2: "two", 3: "three", 4: "four", 5: "five"}


def synth_tasks(seed: int, count: int) -> list[Task]:
    """Deterministic toy tasks whose prompts map onto the toy vocabulary.

    Set sizes come only from {2, 3, 4, 5}; every instruction parses through
    the fallback recaption with exactly ``set_size`` entities.
    """
    rng = Rng(seed)
    shapes = sorted(SHAPES)
    colors = sorted(COLORS)
    tasks = []
    for i in range(count):
        n = 2 + rng.integers(0, 4)
        shared_color = colors[rng.integers(0, len(colors))]
        parts = []
        for j in range(n):
            shape = shapes[rng.integers(0, len(shapes))]
            parts.append(f"the {_ORDINAL_WORDS[j]} image shows a {shared_color} {shape}")
        group = GROUPS[i % len(GROUPS)]
        instruction = (
            f"please generate a matched set of {_SIZE_WORDS[n]} simple flat images "
            f"on a plain black background. " + "; ".join(parts) + ". "
            "keep the same color in every single image of the whole set."
        )
        tasks.append(
            Task(
                id=f"synth-{seed}-{i:03d}",
                group=group,
                subcategory=SUBCATEGORIES[group][0],
                instruction=instruction,
                set_size=n,
                source="synthetic",
            )
        )
    return tasks


def task_recaption(task: Task):
    """Run the fallback recaption over a task (used for validation and the CLI)."""
    return recaption(Instruction(text=task.instruction, set_size=task.set_size))
