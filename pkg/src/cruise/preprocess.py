"""Reduce raw issues to requirement-bearing English text.

The cleaning stages apply strictly in order: pull-request drop, language
gate, markdown stripping (comments, code, noise sections, URLs,
duplicate sentences), trivia filtering, and a final emptiness check.
Every stage only deletes text; nothing is ever rewritten.
"""

from __future__ import annotations

import re
from importlib import resources
from typing import Callable, Iterable, Protocol, Sequence
from urllib.parse import urlsplit

import requests

from .models import PreprocessedIssue, RawIssue, RemovalStats, TriviaVerdict, parse_rfc3339

DEFAULT_SECTION_DROP = (
    "environment",
    "steps to reproduce",
    "system status report",
    "current result",
    "versions",
    "stack trace",
)

PR_BODY_SENTINEL = "This issue is automatically created based on existing pull request"

_HTML_COMMENT_RE = re.compile(r"<!--.*?-->", re.DOTALL)
_FENCE_RE = re.compile(r"^\s{0,3}(```|~~~)")
_INDENTED_CODE_RE = re.compile(r"^(?:\t| {4})\S")
_ATX_HEADING_RE = re.compile(r"^\s{0,3}#{1,6}\s+(.+?)\s*#*\s*$")
_BOLD_HEADING_RE = re.compile(r"^\s*\*\*(.+?)\*\*:?\s*$")
_COLON_HEADING_RE = re.compile(r"^([A-Za-z][A-Za-z0-9 /_()-]{0,60}):\s*(.*)$")
_IMAGE_RE = re.compile(r"!\[[^\]]*\]\([^)]*\)")
_LINK_RE = re.compile(r"\[([^\]]*)\]\(([^)]*)\)")
_BARE_URL_RE = re.compile(r"\bhttps?://\S+|\bwww\.\S+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_WS_RUN_RE = re.compile(r"[ \t]+")
_WORD_RE = re.compile(r"[a-z']+")


def _load_lines(asset: str) -> list[str]:
    text = resources.files("cruise").joinpath(f"data/{asset}").read_text("utf-8")
    return [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]


STOPWORDS = frozenset(_load_lines("stopwords_en.txt"))


def detect_pull_request(issue: RawIssue) -> bool:
    """True for records that are pull requests rather than issues."""
    path_segments = urlsplit(issue.url).path.split("/")
    if "pull" in path_segments:
        return True
    return issue.body.lstrip().startswith(PR_BODY_SENTINEL)


def dedup(issues: Sequence[RawIssue]) -> list[RawIssue]:
    """Keep, per identical (title, body) group, the earliest-created issue.

    Survivors stay in input order.
    """
    winners: dict[tuple[str, str], tuple[int, RawIssue]] = {}
    for position, issue in enumerate(issues):
        group = (issue.title, issue.body)
        held = winners.get(group)
        if held is None:
            winners[group] = (position, issue)
            continue
        _, current = held
        if parse_rfc3339(issue.created_at) < parse_rfc3339(current.created_at):
            winners[group] = (held[0], issue)
    ordered = sorted(winners.values(), key=lambda pair: pair[0])
    return [issue for _, issue in ordered]


def detect_language(text: str) -> str:
    """Baseline gate: english iff at least two distinct stopwords occur
    and at least 90% of characters are ASCII."""
    if not text.strip():
        return "other"
    distinct_stopwords = set(_WORD_RE.findall(text.lower())) & STOPWORDS
    ascii_share = sum(1 for ch in text if ord(ch) < 128) / len(text)
    return "english" if len(distinct_stopwords) >= 2 and ascii_share >= 0.9 else "other"


def _heading_title(line: str) -> str | None:
    for pattern in (_ATX_HEADING_RE, _BOLD_HEADING_RE, _COLON_HEADING_RE):
        found = pattern.match(line)
        if found:
            title = found.group(1).strip().rstrip(":").strip()
            if title:
                return title
    return None


def _normalize_heading(title: str) -> str:
    return _WS_RUN_RE.sub(" ", title.casefold()).strip()


def strip_markdown(
    body: str, drop_sections: Iterable[str] = DEFAULT_SECTION_DROP
) -> tuple[str, RemovalStats]:
    """Delete markdown noise from an issue body.

    Removes HTML comments, fenced and indented code blocks, the listed
    noise sections (heading plus body, up to the next heading), image
    links, bare URLs, and repeated sentences (first occurrence wins).
    Markdown links keep their link text. Whitespace is collapsed and
    empty lines dropped; the cleaned text and per-rule counts return.
    """
    stats = RemovalStats()
    drop_set = {_normalize_heading(title) for title in drop_sections}

    body, comment_count = _HTML_COMMENT_RE.subn("", body)
    stats.html_comments_removed = comment_count

    lines: list[str] = []
    in_fence = False
    for line in body.splitlines():
        if _FENCE_RE.match(line):
            if not in_fence:
                stats.code_blocks_removed += 1
            in_fence = not in_fence
            continue
        if in_fence:
            continue
        lines.append(line)

    kept: list[str] = []
    in_indented_block = False
    for line in lines:
        if _INDENTED_CODE_RE.match(line):
            if not in_indented_block:
                stats.code_blocks_removed += 1
                in_indented_block = True
            continue
        if line.strip():
            in_indented_block = False
            kept.append(line)
        else:
            kept.append(line)
    lines = kept

    result: list[str] = []
    dropping = False
    for line in lines:
        title = _heading_title(line)
        if title is not None:
            if _normalize_heading(title) in drop_set:
                dropping = True
                stats.sections_removed += 1
                continue
            dropping = False
        if not dropping:
            result.append(line)

    cleaned: list[str] = []
    for line in result:
        line, image_count = _IMAGE_RE.subn("", line)
        line, link_count = _LINK_RE.subn(r"\1", line)
        line, url_count = _BARE_URL_RE.subn("", line)
        stats.urls_removed += image_count + link_count + url_count
        line = _WS_RUN_RE.sub(" ", line).strip()
        if line:
            cleaned.append(line)

    seen_sentences: set[str] = set()
    final_lines: list[str] = []
    for line in cleaned:
        surviving: list[str] = []
        for sentence in _SENTENCE_SPLIT_RE.split(line):
            key = _WS_RUN_RE.sub(" ", sentence.casefold()).strip()
            if not key:
                continue
            if key in seen_sentences:
                stats.duplicate_sentences_removed += 1
                continue
            seen_sentences.add(key)
            surviving.append(sentence)
        line = " ".join(surviving).strip()
        if line:
            final_lines.append(line)

    return "\n".join(final_lines), stats


class TriviaScorer(Protocol):
    source: str

    def score_line(self, line: str) -> TriviaVerdict: ...


class TriviaScorerError(RuntimeError):
    pass


class RuleTriviaScorer:
    """Shipped pattern list matched case-insensitively at line start."""

    source = "rule_baseline"

    def __init__(self, patterns: Iterable[str] | None = None):
        raw = list(patterns) if patterns is not None else _load_lines("trivia_patterns.txt")
        self._patterns = [re.compile(p, re.IGNORECASE) for p in raw]

    def score_line(self, line: str) -> TriviaVerdict:
        is_trivia = any(p.match(line.strip()) for p in self._patterns)
        return TriviaVerdict(line, is_trivia, 1.0 if is_trivia else 0.0, self.source)


class RemoteTriviaScorer:
    """Client for a scoring service: POST {base}/score {"text"} -> {"score"}."""

    source = "remote_scorer"

    def __init__(
        self,
        base_url: str,
        threshold: float = 0.5,
        timeout_s: float = 10.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.threshold = threshold
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def score_line(self, line: str) -> TriviaVerdict:
        try:
            response = self._session.post(
                f"{self.base_url}/score", json={"text": line}, timeout=self.timeout_s
            )
            response.raise_for_status()
            score = float(response.json()["score"])
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            raise TriviaScorerError(f"trivia scorer failed: {exc}") from exc
        return TriviaVerdict(line, score >= self.threshold, score, self.source)


def filter_trivia(lines: Sequence[str], scorer: TriviaScorer) -> tuple[list[str], int]:
    """Drop trivia lines, preserving survivor order."""
    survivors: list[str] = []
    removed = 0
    for line in lines:
        if scorer.score_line(line).is_trivia:
            removed += 1
        else:
            survivors.append(line)
    return survivors, removed


def _dropped(issue_id: str, reason: str, stats: RemovalStats | None = None) -> PreprocessedIssue:
    return PreprocessedIssue(
        issue_id=issue_id,
        text="",
        dropped=True,
        drop_reason=reason,
        removal_stats=stats or RemovalStats(),
    )


def preprocess_issue(
    issue: RawIssue,
    scorer: TriviaScorer | None = None,
    detector: Callable[[str], str] | None = None,
    drop_sections: Iterable[str] = DEFAULT_SECTION_DROP,
) -> PreprocessedIssue:
    """Run all per-issue cleaning stages in their fixed order.

    The language gate sees title and body together; the retained text
    comes from the body alone. Scorer errors propagate, leaving the
    issue untouched (the stage is atomic per issue).
    """
    scorer = scorer if scorer is not None else RuleTriviaScorer()
    detector = detector if detector is not None else detect_language
    if detect_pull_request(issue):
        return _dropped(issue.ref, "pull_request")
    if detector(f"{issue.title}\n{issue.body}") != "english":
        return _dropped(issue.ref, "non_english")
    text, stats = strip_markdown(issue.body, drop_sections)
    survivors, removed = filter_trivia(text.splitlines(), scorer)
    stats.trivia_lines_removed = removed
    final_text = "\n".join(survivors)
    if not final_text.strip():
        return _dropped(issue.ref, "empty_after_cleaning", stats)
    return PreprocessedIssue(
        issue_id=issue.ref,
        text=final_text,
        dropped=False,
        drop_reason=None,
        removal_stats=stats,
    )


def preprocess_corpus(
    issues: Sequence[RawIssue],
    scorer: TriviaScorer | None = None,
    detector: Callable[[str], str] | None = None,
    drop_sections: Iterable[str] = DEFAULT_SECTION_DROP,
) -> list[PreprocessedIssue]:
    """Process a whole corpus: PR drop, duplicate drop, then the
    per-issue stages. Output order follows the input."""
    results: dict[str, PreprocessedIssue] = {}
    candidates: list[RawIssue] = []
    for issue in issues:
        if detect_pull_request(issue):
            results[issue.ref] = _dropped(issue.ref, "pull_request")
        else:
            candidates.append(issue)
    survivors = {issue.ref for issue in dedup(candidates)}
    for issue in candidates:
        if issue.ref not in survivors:
            results[issue.ref] = _dropped(issue.ref, "duplicate")
        else:
            results[issue.ref] = preprocess_issue(issue, scorer, detector, drop_sections)
    return [results[issue.ref] for issue in issues]
