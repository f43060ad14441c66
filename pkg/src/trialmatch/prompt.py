"""Prompt assembly with per-character provenance.

A prompt is instructions, then the trial's criteria, then the retrieved
chunks, each section opened by a header. Every character of the final text
belongs to exactly one part, and each part names the source it came from, so
any span of the prompt can be traced back to a criterion or a chunk.

Template files are plain UTF-8 text in two blocks separated by the first
blank line. The text above the blank line is the system instructions. The
rest is the section skeleton and must contain the placeholders
``{instructions}``, ``{criteria}``, and ``{context}`` exactly once each, in
that order; the text between placeholders becomes the section headers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus import Criterion, CriterionKind, Trial
from .errors import ConfigError, PromptBudgetError
from .retrieval import ScoredChunk

_PLACEHOLDERS = ("{instructions}", "{criteria}", "{context}")


class PromptSection(str, Enum):
    INSTRUCTIONS = "instructions"
    CRITERIA = "criteria"
    CONTEXT = "context"


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction text plus layout knobs for prompt assembly.

    ``max_units`` is the whole-prompt word budget. It must comfortably exceed
    the chunk window size or no context will ever fit.
    """

    system_instructions: str
    section_headers: tuple[str, str, str] = (
        "[Instructions]",
        "[Eligibility criteria]",
        "[Patient context]",
    )
    separator: str = "\n"
    max_units: int = 3072

    def __post_init__(self) -> None:
        if not self.system_instructions.strip():
            raise ConfigError("template system_instructions must be nonempty")
        if len(self.section_headers) != 3 or not all(h.strip() for h in self.section_headers):
            raise ConfigError("template needs three nonempty section headers")
        if self.max_units < 1:
            raise ConfigError("template max_units must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path, *, max_units: int = 3072, separator: str = "\n") -> "PromptTemplate":
        return _parse_template(
            Path(path).read_text(encoding="utf-8"), str(path), max_units, separator
        )


def _parse_template(raw: str, origin: str, max_units: int, separator: str) -> PromptTemplate:
    if "\n\n" not in raw:
        raise ConfigError(
            f"template {origin}: expected instructions, a blank line, then the skeleton"
        )
    head, skeleton = raw.split("\n\n", 1)
    positions = []
    for placeholder in _PLACEHOLDERS:
        if skeleton.count(placeholder) != 1:
            raise ConfigError(
                f"template {origin}: skeleton must contain {placeholder} exactly once"
            )
        positions.append(skeleton.index(placeholder))
    if positions != sorted(positions):
        raise ConfigError(
            f"template {origin}: placeholders must appear in the order "
            "{instructions}, {criteria}, {context}"
        )
    before_instr = skeleton[: positions[0]]
    between_a = skeleton[positions[0] + len(_PLACEHOLDERS[0]) : positions[1]]
    between_b = skeleton[positions[1] + len(_PLACEHOLDERS[1]) : positions[2]]
    trailing = skeleton[positions[2] + len(_PLACEHOLDERS[2]) :]
    if trailing.strip():
        raise ConfigError(f"template {origin}: text after the context placeholder is not supported")
    headers = (before_instr.strip(), between_a.strip(), between_b.strip())
    return PromptTemplate(
        system_instructions=head.strip(),
        section_headers=headers,
        separator=separator,
        max_units=max_units,
    )


def default_template(*, max_units: int = 3072) -> PromptTemplate:
    """The packaged default template."""
    raw = resources.files("trialmatch").joinpath("templates/default.txt").read_text("utf-8")
    return _parse_template(raw, "templates/default.txt", max_units, "\n")


@dataclass(frozen=True)
class PromptPart:
    """Half-open character span [start, end) attributed to one source."""

    section: PromptSection
    source_id: str
    start: int
    end: int


@dataclass(frozen=True)
class Prompt:
    text: str
    parts: tuple[PromptPart, ...]
    truncated: bool


def _criterion_lines(criteria: Sequence[Criterion]) -> list[tuple[str, str]]:
    """(source_id, rendered line) per criterion, inclusion first."""
    lines = []
    for kind in (CriterionKind.INCLUSION, CriterionKind.EXCLUSION):
        index = 0
        for criterion in criteria:
            if criterion.kind is kind:
                index += 1
                lines.append((criterion.criterion_id, f"{kind.value} {index}: {criterion.text}"))
    return lines


def _assemble(
    trial: Trial, chunks: Sequence[ScoredChunk], template: PromptTemplate
) -> tuple[str, tuple[PromptPart, ...]]:
    h_instr, h_crit, h_ctx = template.section_headers
    sep = template.separator

    # (section, source_id, leading glue, content) per part. Headers and
    # separators ride along with the part that follows them, so the part
    # spans tile the text with no orphan characters.
    segments: list[tuple[PromptSection, str, str, str]] = []
    segments.append((PromptSection.INSTRUCTIONS, "instructions", h_instr + sep, template.system_instructions))
    for i, (source_id, line) in enumerate(_criterion_lines(trial.criteria)):
        glue = sep + h_crit + sep if i == 0 else sep
        segments.append((PromptSection.CRITERIA, source_id, glue, line))
    for i, scored in enumerate(chunks):
        glue = sep + h_ctx + sep if i == 0 else sep
        segments.append((PromptSection.CONTEXT, scored.chunk.chunk_id, glue, scored.chunk.text))
    if not chunks:
        # Context section stays visible even when empty; the bare header is
        # carried by the last preceding part.
        section, source_id, glue, content = segments[-1]
        segments[-1] = (section, source_id, glue, content + sep + h_ctx)

    text = []
    parts = []
    pos = 0
    for section, source_id, glue, content in segments:
        text.append(glue)
        text.append(content)
        end = pos + len(glue) + len(content)
        parts.append(PromptPart(section=section, source_id=source_id, start=pos, end=end))
        pos = end
    return "".join(text), tuple(parts)


def prompt_word_count(text: str) -> int:
    return len(text.split())


def build_prompt(
    trial: Trial, retrieved: Sequence[ScoredChunk], template: PromptTemplate
) -> Prompt:
    """Render the prompt for one (patient, trial) pair.

    ``retrieved`` must already be in rank order. When the assembled text
    exceeds the template's word budget, whole chunks are dropped from the
    lowest rank upward until it fits; the result is then marked truncated.
    If even the chunk-free prompt is over budget there is nothing left to
    drop and PromptBudgetError is raised.
    """
    kept = list(retrieved)
    while True:
        text, parts = _assemble(trial, kept, template)
        if prompt_word_count(text) <= template.max_units:
            return Prompt(text=text, parts=parts, truncated=len(kept) < len(retrieved))
        if not kept:
            raise PromptBudgetError(
                f"trial {trial.trial_id!r}: instructions and criteria alone use "
                f"{prompt_word_count(text)} words, over the budget of {template.max_units}"
            )
        kept.pop()
