"""Harvest issues from tracker HTTP APIs and persist the raw records.

Trackers speak GET {base_url}/issues?state=...&page=N&per_page=S and
return JSON arrays. A fixture kind reads the same page shapes from
local files so everything runs offline. Only title, body, labels,
state, created_at and url are kept; discussion threads are never
fetched.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import requests

from .models import (
    Clock,
    RawIssue,
    format_rfc3339,
    parse_rfc3339,
    utcnow,
    validate_identifier,
)

logger = logging.getLogger(__name__)

DEFAULT_EXCLUDED_LABELS = frozenset(
    {"cannot reproduce", "duplicate", "needs update", "invalid", "refactoring", "test"}
)

API_KINDS = ("github_rest", "generic_rest_fixture")

_MAX_RETRIES_PER_PAGE = 8


class TrackerConfigError(ValueError):
    pass


class HarvestError(RuntimeError):
    """Retriable harvest failure; ``page`` is where to resume."""

    def __init__(self, message: str, page: int):
        super().__init__(f"{message} (resume at page {page})")
        self.page = page


@dataclass(frozen=True)
class TrackerSource:
    name: str
    base_url: str
    api_kind: str = "github_rest"
    auth_token: str | None = None
    page_size: int = 100

    def __post_init__(self) -> None:
        validate_identifier(self.name, "tracker name")
        if self.api_kind not in API_KINDS:
            raise TrackerConfigError(f"unknown api_kind {self.api_kind!r}")
        if self.page_size < 1:
            raise TrackerConfigError("page_size must be at least 1")
        if not self.base_url:
            raise TrackerConfigError("base_url must be set")


@dataclass(frozen=True)
class HarvestFilter:
    required_state: str = "closed"
    excluded_labels: frozenset[str] = DEFAULT_EXCLUDED_LABELS

    def __post_init__(self) -> None:
        normalized = frozenset(label.strip().casefold() for label in self.excluded_labels)
        object.__setattr__(self, "excluded_labels", normalized)


def is_excluded(issue: RawIssue, harvest_filter: HarvestFilter) -> bool:
    """True iff the state differs or any label is on the exclusion list.

    Label comparison is case-insensitive after trimming.
    """
    if issue.state != harvest_filter.required_state:
        return True
    labels = {label.strip().casefold() for label in issue.labels}
    return bool(labels & harvest_filter.excluded_labels)


def parse_issue(payload: dict, tracker: str, fetched_at: str) -> RawIssue | None:
    """Turn one wire object into a RawIssue; malformed payloads yield None."""
    try:
        issue_id = validate_identifier(str(payload["number"]), "issue id")
        labels = tuple(str(entry["name"]) for entry in payload.get("labels", []))
        issue = RawIssue(
            id=issue_id,
            tracker=tracker,
            url=str(payload["html_url"]),
            title=str(payload["title"]),
            body=str(payload.get("body") or ""),
            labels=labels,
            state=str(payload["state"]),
            created_at=format_rfc3339(parse_rfc3339(str(payload["created_at"]))),
            fetched_at=fetched_at,
        )
    except (KeyError, TypeError, ValueError) as exc:
        logger.warning("skipping malformed issue payload from %s: %s", tracker, exc)
        return None
    return issue


def _http_pages(
    source: TrackerSource,
    state: str,
    session: requests.Session,
    sleep: Callable[[float], None],
    start_page: int = 1,
) -> Iterator[list[dict]]:
    url = source.base_url.rstrip("/") + "/issues"
    headers = {}
    if source.auth_token:
        headers["Authorization"] = f"Bearer {source.auth_token}"
    page = start_page
    while True:
        payload = None
        retries = 0
        while payload is None:
            try:
                response = session.get(
                    url,
                    params={"state": state, "page": page, "per_page": source.page_size},
                    headers=headers,
                    timeout=60,
                )
            except requests.RequestException as exc:
                if retries >= _MAX_RETRIES_PER_PAGE:
                    raise HarvestError(f"{source.name}: transport failure: {exc}", page)
                sleep(min(2.0**retries, 60.0))
                retries += 1
                continue
            if response.status_code == 401:
                raise TrackerConfigError(
                    f"{source.name}: authentication rejected (HTTP 401)"
                )
            if response.status_code in (403, 429):
                if retries >= _MAX_RETRIES_PER_PAGE:
                    raise HarvestError(
                        f"{source.name}: rate limited (HTTP {response.status_code})", page
                    )
                sleep(min(2.0**retries, 60.0))
                retries += 1
                continue
            if response.status_code >= 400:
                raise HarvestError(
                    f"{source.name}: HTTP {response.status_code}: {response.text[:300]}", page
                )
            try:
                payload = response.json()
            except ValueError as exc:
                raise HarvestError(f"{source.name}: non-JSON page: {exc}", page)
        if not isinstance(payload, list):
            raise HarvestError(f"{source.name}: expected a JSON array of issues", page)
        if not payload:
            return
        yield payload
        if len(payload) < source.page_size:
            return
        page += 1


def _fixture_pages(source: TrackerSource) -> Iterator[list[dict]]:
    base = source.base_url
    if base.startswith("file://"):
        base = base[len("file://"):]
    directory = Path(base)
    if not directory.is_dir():
        raise TrackerConfigError(f"{source.name}: fixture directory {directory} not found")
    page = 1
    while True:
        path = directory / f"page_{page}.json"
        if not path.exists():
            return
        payload = json.loads(path.read_text("utf-8"))
        if not isinstance(payload, list):
            raise TrackerConfigError(f"{source.name}: {path} must hold a JSON array")
        if not payload:
            return
        yield payload
        page += 1


def harvest(
    source: TrackerSource,
    harvest_filter: HarvestFilter,
    store,
    *,
    clock: Clock = utcnow,
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
    start_page: int = 1,
) -> list[RawIssue]:
    """Fetch all pages, keep issues passing the filter, persist them.

    Re-running overwrites records under the same (tracker, id) key with
    identical content apart from fetched_at; harvest never deletes.
    """
    if source.api_kind == "generic_rest_fixture":
        pages: Iterator[list[dict]] = _fixture_pages(source)
    else:
        pages = _http_pages(
            source, harvest_filter.required_state, session or requests.Session(),
            sleep, start_page,
        )
    emitted: list[RawIssue] = []
    for page in pages:
        for payload in page:
            issue = parse_issue(payload, source.name, clock())
            if issue is None or is_excluded(issue, harvest_filter):
                continue
            store.put_raw_issue(issue)
            emitted.append(issue)
    return emitted
