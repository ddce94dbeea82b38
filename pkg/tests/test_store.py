"""Durability, integrity, and import/export behavior of the store."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cruise.gherkin import GherkinScenario
from cruise.models import (
    GeneratedCriterion,
    MatchRecord,
    PreprocessedIssue,
    RelevanceAssessment,
    RemovalStats,
    ReviewDecision,
    UserStory,
    criterion_id,
)
from cruise.store import CRITERIA_SEP, IntegrityError, Store, StoreError

from conftest import make_issue

SCENARIO = GherkinScenario(
    title="Totals", given=("a cart",), when=("checkout starts",), then=("totals match",)
)


def seed_pair(store: Store, story_id: str = "US1", issue_id: str = "7") -> str:
    """Insert a story, raw issue, and preprocessed issue; return issue ref."""
    issue = make_issue(issue_id)
    store.put_raw_issue(issue)
    store.put_preprocessed(
        PreprocessedIssue(
            issue_id=issue.ref,
            text="The cart total is wrong.",
            dropped=False,
            drop_reason=None,
            removal_stats=RemovalStats(),
        )
    )
    store.put_user_story(
        UserStory(id=story_id, project="shop", text="As a customer, I want to pay.")
    )
    return issue.ref


def seed_criterion(store: Store, *, label: str = "relevant") -> GeneratedCriterion:
    ref = seed_pair(store)
    criterion = GeneratedCriterion(
        id=criterion_id("US1", ref),
        story_id="US1",
        issue_id=ref,
        raw_text="Scenario: Totals\nGIVEN a cart\nWHEN checkout starts\nTHEN totals match",
        scenario=SCENARIO,
        malformed=False,
        created_at="2024-06-02T00:00:00Z",
    )
    store.put_criterion(criterion)
    store.put_assessment(
        RelevanceAssessment(
            criterion_id=criterion.id, label=label, explanation="", assessor_backend="a"
        )
    )
    return criterion


class TestRoundTrips:
    def test_raw_issue(self, store):
        issue = make_issue("42", labels=("bug", "ui"))
        store.put_raw_issue(issue)
        assert store.get_raw_issue("trk", "42") == issue
        assert store.get_raw_issue("trk", "43") is None

    def test_latest_wins(self, store):
        store.put_raw_issue(make_issue("1", title="old"))
        store.put_raw_issue(make_issue("1", title="new"))
        assert store.get_raw_issue("trk", "1").title == "new"
        assert store.count("raw_issues") == 1

    def test_list_ordered_by_key_with_offset_limit(self, store):
        for issue_id in ("9", "3", "5"):
            store.put_raw_issue(make_issue(issue_id))
        ids = [issue.id for issue in store.list_raw_issues()]
        assert ids == ["3", "5", "9"]
        assert [i.id for i in store.list_raw_issues(offset=1, limit=1)] == ["5"]

    def test_match_record(self, store):
        ref = seed_pair(store)
        record = MatchRecord(
            story_id="US1", issue_id=ref, votes=(("m1", 1), ("m2", 0)), decision=1
        )
        store.put_match_record(record)
        assert store.get_match_record("US1", ref) == record

    def test_criterion_and_assessment(self, store):
        criterion = seed_criterion(store)
        loaded = store.get_criterion(criterion.id)
        assert loaded == criterion
        assert loaded.scenario == SCENARIO
        assert store.get_assessment(criterion.id).label == "relevant"

    def test_malformed_criterion_round_trip(self, store):
        ref = seed_pair(store)
        criterion = GeneratedCriterion(
            id=criterion_id("US1", ref),
            story_id="US1",
            issue_id=ref,
            raw_text="no scenario here",
            scenario=None,
            malformed=True,
            created_at="2024-06-02T00:00:00Z",
        )
        store.put_criterion(criterion)
        assert store.get_criterion(criterion.id) == criterion

    def test_review_decision_latest_wins_per_reviewer(self, store):
        criterion = seed_criterion(store)
        for verdict in ("approved", "declined"):
            store.put_review_decision(
                ReviewDecision(
                    criterion_id=criterion.id,
                    reviewer="alice",
                    verdict=verdict,
                    decided_at="2024-06-03T00:00:00Z",
                )
            )
        decisions = store.decisions_for_criterion(criterion.id)
        assert len(decisions) == 1
        assert decisions[0].verdict == "declined"

    def test_checkpoints(self, store):
        assert not store.has_checkpoint("match", "US1", "trk~7")
        store.put_checkpoint("match", "US1", "trk~7")
        assert store.has_checkpoint("match", "US1", "trk~7")


class TestIntegrity:
    def test_preprocessed_requires_raw_issue(self, store):
        pre = PreprocessedIssue(
            issue_id="trk~404",
            text="x",
            dropped=False,
            drop_reason=None,
            removal_stats=RemovalStats(),
        )
        with pytest.raises(IntegrityError, match="unknown issue"):
            store.put_preprocessed(pre)

    def test_match_requires_story_and_issue(self, store):
        record = MatchRecord(story_id="nope", issue_id="trk~1", votes=(("m", 1),), decision=1)
        with pytest.raises(IntegrityError):
            store.put_match_record(record)

    def test_assessment_requires_criterion(self, store):
        with pytest.raises(IntegrityError):
            store.put_assessment(
                RelevanceAssessment(
                    criterion_id="US1~trk~1", label="relevant", explanation="", assessor_backend="a"
                )
            )

    def test_decision_requires_relevant_criterion(self, store):
        criterion = seed_criterion(store, label="irrelevant")
        with pytest.raises(IntegrityError, match="review queue"):
            store.put_review_decision(
                ReviewDecision(
                    criterion_id=criterion.id,
                    reviewer="alice",
                    verdict="approved",
                    decided_at="2024-06-03T00:00:00Z",
                )
            )

    def test_created_after_fetched_rejected(self, store):
        issue = make_issue("1", created_at="2024-09-01T00:00:00Z", fetched_at="2024-06-01T00:00:00Z")
        with pytest.raises(IntegrityError, match="created_at"):
            store.put_raw_issue(issue)


class TestDurability:
    def test_reopen_reads_everything_back(self, tmp_path):
        root = tmp_path / "store"
        with Store(root) as store:
            criterion = seed_criterion(store)
        with Store(root) as store:
            assert store.get_criterion(criterion.id) == criterion
            assert store.count("raw_issues") == 1

    def test_partial_trailing_line_discarded(self, tmp_path):
        root = tmp_path / "store"
        with Store(root) as store:
            store.put_raw_issue(make_issue("1"))
            store.put_raw_issue(make_issue("2"))
        path = root / "raw_issues.jsonl"
        intact = path.read_bytes()
        path.write_bytes(intact + b'{"key":["trk","3"],"value":{"id":')
        with Store(root) as store:
            assert store.count("raw_issues") == 2
        assert path.read_bytes() == intact  # repaired in place

    @settings(max_examples=30, deadline=None)
    @given(cut=st.integers(min_value=1, max_value=40))
    def test_any_tail_truncation_of_last_line_heals(self, tmp_path_factory, cut):
        root = tmp_path_factory.mktemp("store")
        with Store(root) as store:
            store.put_raw_issue(make_issue("1"))
            store.put_raw_issue(make_issue("2"))
        path = root / "raw_issues.jsonl"
        data = path.read_bytes()
        lines = data.splitlines(keepends=True)
        cut = min(cut, len(lines[-1]))
        path.write_bytes(b"".join(lines[:-1]) + lines[-1][:-cut])
        with Store(root) as store:
            assert store.count("raw_issues") == 1
            store.put_raw_issue(make_issue("2"))  # re-append heals fully
            assert store.count("raw_issues") == 2

    def test_mid_file_corruption_refuses_to_open(self, tmp_path):
        root = tmp_path / "store"
        with Store(root) as store:
            store.put_raw_issue(make_issue("1"))
            store.put_raw_issue(make_issue("2"))
        path = root / "raw_issues.jsonl"
        lines = path.read_bytes().splitlines(keepends=True)
        path.write_bytes(b"garbage not json\n" + lines[1])
        with pytest.raises(StoreError, match="corrupt"):
            Store(root)

    def test_compact_keeps_latest_only(self, tmp_path):
        root = tmp_path / "store"
        with Store(root) as store:
            for title in ("a", "b", "c"):
                store.put_raw_issue(make_issue("1", title=title))
            store.put_raw_issue(make_issue("2"))
            assert store.compact("raw_issues") == 2
            assert store.get_raw_issue("trk", "1").title == "c"
        path = root / "raw_issues.jsonl"
        assert len(path.read_text("utf-8").splitlines()) == 2
        with Store(root) as store:
            assert store.get_raw_issue("trk", "1").title == "c"

    def test_unknown_entity_rejected(self, store):
        with pytest.raises(StoreError):
            store.compact("nonsense")
        with pytest.raises(StoreError):
            store.export("nonsense", "csv", "out.csv")


class TestExportImport:
    def test_jsonl_export_round_trips(self, store, tmp_path):
        criterion = seed_criterion(store)
        out = tmp_path / "criteria.jsonl"
        assert store.export("criteria", "jsonl", out) == 1
        record = json.loads(out.read_text("utf-8"))
        assert record["id"] == criterion.id
        assert record["scenario_text"].startswith("Scenario: Totals")

    def test_csv_export_layout(self, store, tmp_path):
        seed_criterion(store)
        out = tmp_path / "stories.csv"
        store.export("user_stories", "csv", out)
        header, row = out.read_text("utf-8").splitlines()[:2]
        assert header == "id,project,text,acceptance_criteria,language"
        assert row.startswith("US1,shop,")

    def test_import_stories_round_trip(self, store, tmp_path):
        path = tmp_path / "stories.csv"
        criteria = f"GIVEN a THEN b{CRITERIA_SEP}GIVEN c THEN d"
        path.write_text(
            "id,project,text,acceptance_criteria,language\n"
            f'S1,shop,"As a buyer, I want receipts, so that I can file expenses.",{criteria},english\n'
            'S2,shop,"Als Käufer möchte ich Belege.",,other\n',
            "utf-8",
        )
        count, errors = store.import_user_stories(path)
        assert (count, errors) == (2, [])
        story = store.get_user_story("S1")
        assert story.existing_criteria == ("GIVEN a THEN b", "GIVEN c THEN d")
        assert story.role == "buyer"
        assert story.action == "receipts"
        assert story.benefit == "I can file expenses"
        assert store.get_user_story("S2").language == "other"

    def test_import_reports_bad_rows_with_line_numbers(self, store, tmp_path):
        path = tmp_path / "stories.csv"
        path.write_text(
            "id,project,text\n"
            'S1,shop,"As a buyer, I want receipts."\n'
            ',shop,"missing id"\n'
            'S3,shop,""\n',
            "utf-8",
        )
        count, errors = store.import_user_stories(path)
        assert count == 1
        assert [line for line, _ in errors] == [3, 4]

    def test_import_requires_columns(self, store, tmp_path):
        path = tmp_path / "stories.csv"
        path.write_text("foo,bar\n1,2\n", "utf-8")
        with pytest.raises(StoreError, match="columns"):
            store.import_user_stories(path)
