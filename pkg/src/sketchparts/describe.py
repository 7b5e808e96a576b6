"""Template-filled English descriptions of parsed sketches."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractViolation
from .poses import PHRASES, POSES

COUNT_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]
IRREGULAR_PLURALS = {"body": "bodies"}


@dataclass(frozen=True)
class SketchSummary:
    """What the pipeline knows about one sketch: category (when known),
    super-category, per-part instance counts, and the 8-way pose."""

    supercategory: str
    part_counts: dict  # part name -> connected-instance count, sentence order
    pose: str
    category: str | None = None

    def __post_init__(self):
        if self.pose not in POSES:
            raise ContractViolation(f"unknown pose {self.pose!r}")
        for part, count in self.part_counts.items():
            if count < 1:
                raise ContractViolation(f"part {part!r} has count {count}")


def count_word(n):
    return COUNT_WORDS[n] if 0 <= n < len(COUNT_WORDS) else str(n)


def pluralize(part, count):
    if count == 1:
        return part
    return IRREGULAR_PLURALS.get(part, part + "s")


def _singular(name):
    return name[:-1] if name.endswith("s") else name


def describe(summary):
    """Deterministic sentence naming the category, pose and every part count.

    With an unknown category the super-category carries the noun phrase;
    with no parts the part clause is omitted.
    """
    if summary.category:
        head = f"a {summary.category} (a {_singular(summary.supercategory)})"
    else:
        head = f"a {_singular(summary.supercategory)}"
    sentence = f"This is a sketch of {head} facing {PHRASES[summary.pose]}"
    items = [
        f"{count_word(count)} {pluralize(part, count)}"
        for part, count in summary.part_counts.items()
    ]
    if not items:
        return sentence + "."
    if len(items) == 1:
        clause = items[0]
    else:
        clause = ", ".join(items[:-1]) + " and " + items[-1]
    return f"{sentence}, with {clause}."
