"""Parsing and serialization of GIVEN-WHEN-THEN scenarios.

Model replies are rarely clean. The parser tolerates prose before the
scenario, bullet markers and bold markup in front of keywords, a colon
after a keyword, and trailing chatter after the last step. It never
invents content: every step comes verbatim from the input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TITLE_MAX = 120

_SCENARIO_RE = re.compile(
    r"^\s*(?:[-*•]\s*)?(\*\*\s*)?scenario(?:\s+outline)?\s*:", re.IGNORECASE
)
# An optional bold/underscore marker around the keyword is consumed only
# when it opened before the keyword (backreference), so step text that
# merely starts with ** is left alone.
_STEP_RE = re.compile(
    r"^(?:(\*\*|__)\s*)?(given|when|then|and|but)\b\s*:?\s*(?:\1\s*:?\s*)?(.*)$",
    re.IGNORECASE,
)
_LEADING_MARKUP_RE = re.compile(r"^(?:[-*•]\s+|\d+[.)]\s+|#+\s+)+")


class GherkinParseError(ValueError):
    """Raised when text does not contain a complete scenario.

    ``part`` names what is wrong: "GIVEN", "WHEN" or "THEN" for a missing
    step group, or "GIVEN" when steps appear before any GIVEN.
    """

    def __init__(self, message: str, part: str):
        super().__init__(message)
        self.part = part


def _clean_step_text(text: str) -> str:
    text = text.strip()
    while text.startswith(":"):
        text = text[1:].lstrip()
    return text


@dataclass(frozen=True)
class GherkinScenario:
    """A parsed scenario. Step texts exclude their keywords.

    Construction canonicalizes whitespace at step boundaries, so
    ``parse_scenario(serialize_scenario(s)) == s`` holds for every
    instance that passes validation.
    """

    title: str
    given: tuple[str, ...]
    when: tuple[str, ...]
    then: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "title", self.title.strip())
        for name in ("given", "when", "then"):
            steps = tuple(_clean_step_text(s) for s in getattr(self, name))
            object.__setattr__(self, name, steps)
        if not self.title:
            raise ValueError("scenario title must be non-empty")
        if len(self.title.splitlines()) != 1:
            raise ValueError("scenario title must be a single line")
        for name in ("given", "when", "then"):
            steps = getattr(self, name)
            if not steps:
                raise ValueError(f"scenario needs at least one {name.upper()} step")
            for step in steps:
                if not step:
                    raise ValueError(f"empty {name.upper()} step text")
                if len(step.splitlines()) != 1:
                    raise ValueError("step text must be a single line")


def parse_scenario(raw: str) -> GherkinScenario:
    """Extract the first scenario from ``raw``.

    A ``Scenario:`` line supplies the title; without one, the first
    non-empty line does (truncated to 120 characters). Steps keyed by
    GIVEN/WHEN/THEN open groups; AND/BUT extend the open group. Any step
    keyword before the first GIVEN is an error, as is a missing group.
    """
    lines = raw.splitlines()

    title: str | None = None
    scan_start = 0
    for index, line in enumerate(lines):
        marker = _SCENARIO_RE.match(line)
        if marker:
            candidate = line[marker.end():].strip()
            if marker.group(1) and candidate.endswith("**"):
                candidate = candidate[:-2].rstrip()
            if candidate:
                title = candidate
                scan_start = index + 1
            break

    given: list[str] = []
    when: list[str] = []
    then: list[str] = []
    groups = {"given": given, "when": when, "then": then}
    current: list[str] | None = None
    steps_started = False

    for line in lines[scan_start:]:
        stripped = _LEADING_MARKUP_RE.sub("", line.strip())
        if not stripped:
            continue
        if steps_started and _SCENARIO_RE.match(stripped):
            break  # a second scenario begins; only the first one counts
        step = _STEP_RE.match(stripped)
        if step is None:
            if steps_started:
                break
            continue
        keyword = step.group(2).lower()
        text = _clean_step_text(step.group(3))
        if keyword in groups:
            if keyword != "given" and not given:
                raise GherkinParseError(
                    f"{keyword.upper()} step before any GIVEN", part="GIVEN"
                )
            current = groups[keyword]
        else:  # and / but
            if current is None:
                raise GherkinParseError(
                    f"{keyword.upper()} step before any GIVEN", part="GIVEN"
                )
        steps_started = True
        if text:
            current.append(text)

    for part in ("given", "when", "then"):
        if not groups[part]:
            raise GherkinParseError(f"no {part.upper()} step found", part=part.upper())

    if title is None:
        first = next((ln.strip() for ln in lines if ln.strip()), "")
        title = first[:_TITLE_MAX].strip()

    return GherkinScenario(title=title, given=tuple(given), when=tuple(when), then=tuple(then))


def serialize_scenario(scenario: GherkinScenario) -> str:
    """Render the canonical text form, one step per line, AND for extras."""
    out = [f"Scenario: {scenario.title}"]
    for keyword, steps in (
        ("GIVEN", scenario.given),
        ("WHEN", scenario.when),
        ("THEN", scenario.then),
    ):
        out.append(f"{keyword} {steps[0]}")
        out.extend(f"AND {step}" for step in steps[1:])
    return "\n".join(out)
