"""Durable single-writer persistence for every pipeline entity.

Each entity lives in one append-only JSON-lines log under the store
root. A put appends ``{"key": [...], "value": {...}}`` and fsyncs, so a
write is durable when the call returns; the latest record per key wins.
Opening a store rebuilds the in-memory indexes and discards a partial
trailing line left by a crash. ``compact()`` rewrites a log to its
surviving records and is never run implicitly.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any

from .models import (
    GeneratedCriterion,
    MatchRecord,
    PreprocessedIssue,
    RawIssue,
    RelevanceAssessment,
    ReviewDecision,
    UserStory,
    parse_connextra,
    parse_rfc3339,
    split_issue_ref,
)

logger = logging.getLogger(__name__)

ENTITIES = (
    "raw_issues",
    "preprocessed_issues",
    "user_stories",
    "match_records",
    "criteria",
    "assessments",
    "review_decisions",
    "run_checkpoints",
)

# Acceptance-criteria lists inside CSV cells use this join mark; it does
# not occur in natural text, so splitting is unambiguous.
CRITERIA_SEP = "‖"

CSV_COLUMNS: dict[str, tuple[str, ...]] = {
    "raw_issues": (
        "tracker", "id", "url", "title", "body", "labels", "state", "created_at", "fetched_at",
    ),
    "preprocessed_issues": (
        "issue_id", "dropped", "drop_reason", "text",
        "sections_removed", "code_blocks_removed", "urls_removed",
        "html_comments_removed", "duplicate_sentences_removed", "trivia_lines_removed",
    ),
    "user_stories": ("id", "project", "text", "acceptance_criteria", "language"),
    "match_records": ("story_id", "issue_id", "votes", "decision"),
    "criteria": ("id", "story_id", "issue_id", "malformed", "created_at", "scenario_text", "raw_text"),
    "assessments": ("criterion_id", "label", "assessor_backend", "explanation"),
    "review_decisions": ("criterion_id", "reviewer", "verdict", "decided_at"),
    "run_checkpoints": ("stage", "story_id", "issue_id", "status"),
}


class StoreError(RuntimeError):
    pass


class IntegrityError(StoreError):
    def __init__(self, constraint: str, message: str):
        super().__init__(f"{message} [constraint: {constraint}]")
        self.constraint = constraint


class Store:
    """Opens (creating if needed) the store rooted at ``root``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._handles: dict[str, Any] = {}
        self._index: dict[str, dict[tuple[str, ...], dict]] = {e: {} for e in ENTITIES}
        for entity in ENTITIES:
            self._load_entity(entity)

    # -- plumbing ---------------------------------------------------------

    def _path(self, entity: str) -> Path:
        return self.root / f"{entity}.jsonl"

    def _load_entity(self, entity: str) -> None:
        path = self._path(entity)
        if not path.exists():
            return
        data = path.read_bytes()
        offset = 0
        good_end = 0
        index = self._index[entity]
        while offset < len(data):
            newline = data.find(b"\n", offset)
            if newline == -1:
                # partial trailing line from an interrupted write
                logger.warning(
                    "%s: discarding %d partial trailing bytes", path, len(data) - offset
                )
                break
            line = data[offset:newline]
            try:
                record = json.loads(line)
                key = tuple(record["key"])
                value = record["value"]
            except (ValueError, KeyError, TypeError) as exc:
                raise StoreError(f"{path}: corrupt record at byte {offset}: {exc}") from exc
            index[key] = value
            offset = newline + 1
            good_end = offset
        if good_end < len(data):
            with open(path, "r+b") as handle:
                handle.truncate(good_end)

    def _handle(self, entity: str):
        handle = self._handles.get(entity)
        if handle is None:
            handle = open(self._path(entity), "ab")
            self._handles[entity] = handle
        return handle

    def _append(self, entity: str, key: tuple[str, ...], value: dict) -> None:
        line = json.dumps({"key": list(key), "value": value}, sort_keys=True,
                          separators=(",", ":"))
        with self._lock:
            handle = self._handle(entity)
            handle.write(line.encode("utf-8") + b"\n")
            handle.flush()
            os.fsync(handle.fileno())
            self._index[entity][key] = value

    def _get(self, entity: str, key: tuple[str, ...]) -> dict | None:
        return self._index[entity].get(key)

    def _list(self, entity: str, offset: int = 0, limit: int | None = None) -> list[dict]:
        index = self._index[entity]
        keys = sorted(index)
        if limit is not None:
            keys = keys[offset : offset + limit]
        elif offset:
            keys = keys[offset:]
        return [index[k] for k in keys]

    def count(self, entity: str) -> int:
        return len(self._index[entity])

    def close(self) -> None:
        with self._lock:
            for handle in self._handles.values():
                handle.close()
            self._handles.clear()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- raw issues -------------------------------------------------------

    def put_raw_issue(self, issue: RawIssue) -> None:
        if not issue.id:
            raise IntegrityError("issue-id-nonempty", "issue id must be non-empty")
        if parse_rfc3339(issue.created_at) > parse_rfc3339(issue.fetched_at):
            raise IntegrityError(
                "created-before-fetched",
                f"issue {issue.ref}: created_at {issue.created_at} is after "
                f"fetched_at {issue.fetched_at}",
            )
        self._append("raw_issues", issue.key(), issue.to_record())

    def get_raw_issue(self, tracker: str, issue_id: str) -> RawIssue | None:
        record = self._get("raw_issues", (tracker, issue_id))
        return None if record is None else RawIssue.from_record(record)

    def list_raw_issues(self, offset: int = 0, limit: int | None = None) -> list[RawIssue]:
        return [RawIssue.from_record(r) for r in self._list("raw_issues", offset, limit)]

    # -- preprocessed issues ----------------------------------------------

    def put_preprocessed(self, pre: PreprocessedIssue) -> None:
        tracker, issue_id = split_issue_ref(pre.issue_id)
        if self._get("raw_issues", (tracker, issue_id)) is None:
            raise IntegrityError(
                "preprocessed-references-issue",
                f"preprocessed record references unknown issue {pre.issue_id}",
            )
        self._append("preprocessed_issues", (pre.issue_id,), pre.to_record())

    def get_preprocessed(self, issue_id: str) -> PreprocessedIssue | None:
        record = self._get("preprocessed_issues", (issue_id,))
        return None if record is None else PreprocessedIssue.from_record(record)

    def list_preprocessed(self, offset: int = 0, limit: int | None = None) -> list[PreprocessedIssue]:
        return [
            PreprocessedIssue.from_record(r)
            for r in self._list("preprocessed_issues", offset, limit)
        ]

    # -- user stories -------------------------------------------------------

    def put_user_story(self, story: UserStory) -> None:
        self._append("user_stories", (story.id,), story.to_record())

    def get_user_story(self, story_id: str) -> UserStory | None:
        record = self._get("user_stories", (story_id,))
        return None if record is None else UserStory.from_record(record)

    def list_user_stories(self, offset: int = 0, limit: int | None = None) -> list[UserStory]:
        return [UserStory.from_record(r) for r in self._list("user_stories", offset, limit)]

    # -- match records ------------------------------------------------------

    def put_match_record(self, record: MatchRecord) -> None:
        self._require_story(record.story_id, "match-references-story")
        self._require_preprocessed(record.issue_id, "match-references-issue")
        self._append(
            "match_records", (record.story_id, record.issue_id), record.to_record()
        )

    def get_match_record(self, story_id: str, issue_id: str) -> MatchRecord | None:
        record = self._get("match_records", (story_id, issue_id))
        return None if record is None else MatchRecord.from_record(record)

    def list_match_records(self, offset: int = 0, limit: int | None = None) -> list[MatchRecord]:
        return [MatchRecord.from_record(r) for r in self._list("match_records", offset, limit)]

    # -- criteria -----------------------------------------------------------

    def put_criterion(self, criterion: GeneratedCriterion) -> None:
        self._require_story(criterion.story_id, "criterion-references-story")
        self._require_preprocessed(criterion.issue_id, "criterion-references-issue")
        self._append("criteria", (criterion.id,), criterion.to_record())

    def get_criterion(self, criterion_id: str) -> GeneratedCriterion | None:
        record = self._get("criteria", (criterion_id,))
        return None if record is None else GeneratedCriterion.from_record(record)

    def list_criteria(self, offset: int = 0, limit: int | None = None) -> list[GeneratedCriterion]:
        return [GeneratedCriterion.from_record(r) for r in self._list("criteria", offset, limit)]

    # -- assessments ----------------------------------------------------------

    def put_assessment(self, assessment: RelevanceAssessment) -> None:
        if self._get("criteria", (assessment.criterion_id,)) is None:
            raise IntegrityError(
                "assessment-references-criterion",
                f"assessment references unknown criterion {assessment.criterion_id}",
            )
        self._append("assessments", (assessment.criterion_id,), assessment.to_record())

    def get_assessment(self, criterion_id: str) -> RelevanceAssessment | None:
        record = self._get("assessments", (criterion_id,))
        return None if record is None else RelevanceAssessment.from_record(record)

    def list_assessments(self, offset: int = 0, limit: int | None = None) -> list[RelevanceAssessment]:
        return [
            RelevanceAssessment.from_record(r) for r in self._list("assessments", offset, limit)
        ]

    # -- review decisions -----------------------------------------------------

    def put_review_decision(self, decision: ReviewDecision) -> None:
        criterion = self._get("criteria", (decision.criterion_id,))
        if criterion is None:
            raise IntegrityError(
                "decision-references-criterion",
                f"decision references unknown criterion {decision.criterion_id}",
            )
        assessment = self._get("assessments", (decision.criterion_id,))
        if criterion["malformed"] or assessment is None or assessment["label"] != "relevant":
            raise IntegrityError(
                "decision-requires-relevant-criterion",
                f"criterion {decision.criterion_id} is not in the review queue "
                "(must be well-formed and assessed relevant)",
            )
        self._append(
            "review_decisions",
            (decision.criterion_id, decision.reviewer),
            decision.to_record(),
        )

    def list_review_decisions(self, offset: int = 0, limit: int | None = None) -> list[ReviewDecision]:
        return [
            ReviewDecision.from_record(r)
            for r in self._list("review_decisions", offset, limit)
        ]

    def decisions_for_criterion(self, criterion_id: str) -> list[ReviewDecision]:
        return [d for d in self.list_review_decisions() if d.criterion_id == criterion_id]

    # -- checkpoints -----------------------------------------------------------

    def put_checkpoint(self, stage: str, story_id: str, issue_id: str) -> None:
        self._append("run_checkpoints", (stage, story_id, issue_id), {"status": "done"})

    def has_checkpoint(self, stage: str, story_id: str, issue_id: str) -> bool:
        return self._get("run_checkpoints", (stage, story_id, issue_id)) is not None

    # -- shared integrity helpers ----------------------------------------------

    def _require_story(self, story_id: str, constraint: str) -> None:
        if self._get("user_stories", (story_id,)) is None:
            raise IntegrityError(constraint, f"unknown user story {story_id}")

    def _require_preprocessed(self, issue_id: str, constraint: str) -> None:
        if self._get("preprocessed_issues", (issue_id,)) is None:
            raise IntegrityError(constraint, f"unknown preprocessed issue {issue_id}")

    # -- maintenance -------------------------------------------------------------

    def compact(self, entity: str) -> int:
        """Rewrite the entity log keeping only the newest record per key.

        Returns the number of surviving records. Changes the byte layout
        (records come out in key order), so it is never run implicitly.
        """
        if entity not in ENTITIES:
            raise StoreError(f"unknown entity {entity!r}")
        with self._lock:
            handle = self._handles.pop(entity, None)
            if handle is not None:
                handle.close()
            index = self._index[entity]
            tmp = self._path(entity).with_suffix(".jsonl.tmp")
            with open(tmp, "wb") as out:
                for key in sorted(index):
                    line = json.dumps(
                        {"key": list(key), "value": index[key]},
                        sort_keys=True, separators=(",", ":"),
                    )
                    out.write(line.encode("utf-8") + b"\n")
                out.flush()
                os.fsync(out.fileno())
            os.replace(tmp, self._path(entity))
            return len(index)

    # -- import / export -----------------------------------------------------------

    def export(self, entity: str, fmt: str, path: str | Path) -> int:
        """Write all records of ``entity`` to ``path`` as csv or jsonl."""
        if entity not in ENTITIES:
            raise StoreError(f"unknown entity {entity!r}")
        if fmt not in ("csv", "jsonl"):
            raise StoreError(f"unknown export format {fmt!r}")
        records = self._list(entity)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "jsonl":
            with open(path, "w", encoding="utf-8", newline="\n") as out:
                for record in records:
                    out.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
            return len(records)
        columns = CSV_COLUMNS[entity]
        with open(path, "w", encoding="utf-8", newline="") as out:
            writer = csv.writer(out)
            writer.writerow(columns)
            for record in records:
                writer.writerow(self._csv_row(entity, record))
        return len(records)

    @staticmethod
    def _csv_row(entity: str, record: dict) -> list[str]:
        if entity == "raw_issues":
            flat = dict(record)
            flat["labels"] = CRITERIA_SEP.join(record["labels"])
        elif entity == "preprocessed_issues":
            flat = {k: v for k, v in record.items() if k != "removal_stats"}
            flat.update(record["removal_stats"])
        elif entity == "user_stories":
            flat = dict(record)
            flat["acceptance_criteria"] = CRITERIA_SEP.join(record["existing_criteria"])
        elif entity == "match_records":
            flat = dict(record)
            flat["votes"] = ";".join(f"{name}={vote}" for name, vote in record["votes"])
        else:
            flat = dict(record)
        return ["" if flat.get(c) is None else str(flat.get(c, "")) for c in CSV_COLUMNS[entity]]

    def import_user_stories(self, path: str | Path) -> tuple[int, list[tuple[int, str]]]:
        """Upsert stories from a CSV file (columns: id, project, text,
        acceptance_criteria separated by ``‖``, language).

        Returns (count imported, [(line number, error message), ...]).
        """
        imported = 0
        errors: list[tuple[int, str]] = []
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            required = {"id", "project", "text"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise StoreError(
                    f"user story file must have at least columns {sorted(required)}"
                )
            for row in reader:
                line_no = reader.line_num
                criteria_cell = (row.get("acceptance_criteria") or "").strip()
                criteria = tuple(
                    part.strip() for part in criteria_cell.split(CRITERIA_SEP) if part.strip()
                ) if criteria_cell else ()
                text = (row.get("text") or "").strip()
                role, action, benefit = parse_connextra(text)
                try:
                    story = UserStory(
                        id=(row.get("id") or "").strip(),
                        project=(row.get("project") or "").strip(),
                        text=text,
                        role=role,
                        action=action,
                        benefit=benefit,
                        existing_criteria=criteria,
                        language=(row.get("language") or "english").strip() or "english",
                    )
                except ValueError as exc:
                    errors.append((line_no, str(exc)))
                    continue
                self.put_user_story(story)
                imported += 1
        return imported, errors
