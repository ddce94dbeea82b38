"""Domain records shared across the pipeline stages and the store."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Callable

from .gherkin import GherkinScenario, parse_scenario, serialize_scenario

RFC3339_FMT = "%Y-%m-%dT%H:%M:%SZ"

# Identifiers end up in store keys, criterion ids and URL paths, so the
# charset must stay free of the "~" join character and path separators.
_IDENT_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

Clock = Callable[[], str]


def utcnow() -> str:
    """Current time as an RFC 3339 UTC string (second resolution)."""
    return datetime.now(timezone.utc).strftime(RFC3339_FMT)


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 timestamp, tolerating the trailing-Z form."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime(RFC3339_FMT)


def validate_identifier(value: str, what: str) -> str:
    if not _IDENT_RE.match(value):
        raise ValueError(
            f"{what} {value!r} must match [A-Za-z0-9_.-]+ so it can be used "
            "in record keys and URLs"
        )
    return value


def issue_ref(tracker: str, issue_id: str) -> str:
    """Stable single-string reference to an issue, e.g. ``shopware~4711``."""
    return f"{tracker}~{issue_id}"


def split_issue_ref(ref: str) -> tuple[str, str]:
    tracker, sep, issue_id = ref.partition("~")
    if not sep or not tracker or not issue_id:
        raise ValueError(f"not an issue reference: {ref!r}")
    return tracker, issue_id


def criterion_id(story_id: str, ref: str) -> str:
    return f"{story_id}~{ref}"


_CONNEXTRA_RE = re.compile(
    r"^as\s+an?\s+(?P<role>.+?),\s*i\s+(?:want|would like|need)\s+(?:to\s+)?(?P<action>.+?)"
    r"(?:,?\s*so\s+that\s+(?P<benefit>.+?))?\s*\.?\s*$",
    re.IGNORECASE | re.DOTALL,
)


def parse_connextra(text: str) -> tuple[str | None, str | None, str | None]:
    """Split "As a [role], I want [action], so that [benefit]" stories.

    Returns (None, None, None) for free-form text; captured parts are
    substrings of the input.
    """
    found = _CONNEXTRA_RE.match(text.strip())
    if not found:
        return None, None, None
    return found.group("role"), found.group("action"), found.group("benefit")


@dataclass(frozen=True)
class RawIssue:
    """One issue as fetched from a tracker, before any cleaning."""

    id: str
    tracker: str
    url: str
    title: str
    body: str
    labels: tuple[str, ...]
    state: str
    created_at: str
    fetched_at: str

    @property
    def ref(self) -> str:
        return issue_ref(self.tracker, self.id)

    def key(self) -> tuple[str, str]:
        return (self.tracker, self.id)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "tracker": self.tracker,
            "url": self.url,
            "title": self.title,
            "body": self.body,
            "labels": list(self.labels),
            "state": self.state,
            "created_at": self.created_at,
            "fetched_at": self.fetched_at,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "RawIssue":
        data = dict(record)
        data["labels"] = tuple(data.get("labels", ()))
        return cls(**data)


@dataclass
class RemovalStats:
    """Counts of text removed per cleaning rule, for audit output."""

    sections_removed: int = 0
    code_blocks_removed: int = 0
    urls_removed: int = 0
    html_comments_removed: int = 0
    duplicate_sentences_removed: int = 0
    trivia_lines_removed: int = 0

    def merged(self, other: "RemovalStats") -> "RemovalStats":
        return RemovalStats(
            self.sections_removed + other.sections_removed,
            self.code_blocks_removed + other.code_blocks_removed,
            self.urls_removed + other.urls_removed,
            self.html_comments_removed + other.html_comments_removed,
            self.duplicate_sentences_removed + other.duplicate_sentences_removed,
            self.trivia_lines_removed + other.trivia_lines_removed,
        )

    def to_record(self) -> dict[str, int]:
        return {
            "sections_removed": self.sections_removed,
            "code_blocks_removed": self.code_blocks_removed,
            "urls_removed": self.urls_removed,
            "html_comments_removed": self.html_comments_removed,
            "duplicate_sentences_removed": self.duplicate_sentences_removed,
            "trivia_lines_removed": self.trivia_lines_removed,
        }

    @classmethod
    def from_record(cls, record: dict[str, int]) -> "RemovalStats":
        return cls(**record)


DROP_REASONS = ("pull_request", "duplicate", "non_english", "empty_after_cleaning")


@dataclass(frozen=True)
class PreprocessedIssue:
    """Cleaning outcome for one issue: retained text or a drop verdict."""

    issue_id: str  # issue_ref() of the source RawIssue
    text: str
    dropped: bool
    drop_reason: str | None
    removal_stats: RemovalStats

    def __post_init__(self) -> None:
        if self.dropped:
            if self.drop_reason not in DROP_REASONS:
                raise ValueError(f"unknown drop reason: {self.drop_reason!r}")
            if self.text:
                raise ValueError("dropped issues must not retain text")
        else:
            if self.drop_reason is not None:
                raise ValueError("drop_reason must be None for kept issues")
            if not self.text.strip():
                raise ValueError("kept issues must retain non-empty text")

    def to_record(self) -> dict[str, Any]:
        return {
            "issue_id": self.issue_id,
            "text": self.text,
            "dropped": self.dropped,
            "drop_reason": self.drop_reason,
            "removal_stats": self.removal_stats.to_record(),
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "PreprocessedIssue":
        data = dict(record)
        data["removal_stats"] = RemovalStats.from_record(data["removal_stats"])
        return cls(**data)


@dataclass(frozen=True)
class UserStory:
    id: str
    project: str
    text: str
    role: str | None = None
    action: str | None = None
    benefit: str | None = None
    existing_criteria: tuple[str, ...] = ()
    language: str = "english"

    def __post_init__(self) -> None:
        validate_identifier(self.id, "user story id")
        if not self.text.strip():
            raise ValueError("user story text must be non-empty")
        if self.language not in ("english", "other"):
            raise ValueError(f"unknown language tag: {self.language!r}")

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "project": self.project,
            "text": self.text,
            "role": self.role,
            "action": self.action,
            "benefit": self.benefit,
            "existing_criteria": list(self.existing_criteria),
            "language": self.language,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "UserStory":
        data = dict(record)
        data["existing_criteria"] = tuple(data.get("existing_criteria", ()))
        return cls(**data)


@dataclass(frozen=True)
class MatchRecord:
    """Ensemble verdict on whether one issue affects one user story."""

    story_id: str
    issue_id: str
    votes: tuple[tuple[str, int], ...]  # (backend name, 0 or 1) in ensemble order
    decision: int

    def __post_init__(self) -> None:
        if self.decision not in (0, 1):
            raise ValueError("decision must be 0 or 1")
        for name, vote in self.votes:
            if vote not in (0, 1):
                raise ValueError(f"vote for {name!r} must be 0 or 1")

    @property
    def k(self) -> int:
        return len(self.votes)

    def to_record(self) -> dict[str, Any]:
        return {
            "story_id": self.story_id,
            "issue_id": self.issue_id,
            "votes": [[name, vote] for name, vote in self.votes],
            "decision": self.decision,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "MatchRecord":
        data = dict(record)
        data["votes"] = tuple((name, vote) for name, vote in data["votes"])
        return cls(**data)


@dataclass(frozen=True)
class GeneratedCriterion:
    """One generated acceptance criterion, well-formed or not."""

    id: str
    story_id: str
    issue_id: str
    raw_text: str
    scenario: GherkinScenario | None
    malformed: bool
    created_at: str

    def __post_init__(self) -> None:
        if self.malformed != (self.scenario is None):
            raise ValueError("malformed criteria are exactly those without a scenario")

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "story_id": self.story_id,
            "issue_id": self.issue_id,
            "raw_text": self.raw_text,
            "scenario_text": None if self.scenario is None else serialize_scenario(self.scenario),
            "malformed": self.malformed,
            "created_at": self.created_at,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "GeneratedCriterion":
        data = dict(record)
        scenario_text = data.pop("scenario_text")
        data["scenario"] = None if scenario_text is None else parse_scenario(scenario_text)
        return cls(**data)


LABELS = ("relevant", "irrelevant")


@dataclass(frozen=True)
class RelevanceAssessment:
    criterion_id: str
    label: str
    explanation: str
    assessor_backend: str

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    def to_record(self) -> dict[str, Any]:
        return {
            "criterion_id": self.criterion_id,
            "label": self.label,
            "explanation": self.explanation,
            "assessor_backend": self.assessor_backend,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "RelevanceAssessment":
        return cls(**record)


VERDICTS = ("approved", "declined")


@dataclass(frozen=True)
class ReviewDecision:
    criterion_id: str
    reviewer: str
    verdict: str
    decided_at: str

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if not self.reviewer.strip():
            raise ValueError("reviewer must be non-empty")

    def to_record(self) -> dict[str, Any]:
        return {
            "criterion_id": self.criterion_id,
            "reviewer": self.reviewer,
            "verdict": self.verdict,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "ReviewDecision":
        return cls(**record)


@dataclass(frozen=True)
class SampleSpec:
    """Deterministic sub-sampling parameters for a pipeline run."""

    seed: int
    story_count: int | None = None
    issue_count: int | None = None
    criteria_per_story_cap: int = 10

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for name in ("story_count", "issue_count"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.criteria_per_story_cap < 1:
            raise ValueError("criteria_per_story_cap must be at least 1")


@dataclass(frozen=True)
class TriviaVerdict:
    line: str
    is_trivia: bool
    score: float
    source: str  # "rule_baseline" or "remote_scorer"
