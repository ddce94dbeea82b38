"""Review HTTP API: queue views, independence, consensus, report."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from cruise import metrics
from cruise.gherkin import parse_scenario
from cruise.models import (
    GeneratedCriterion,
    PreprocessedIssue,
    RelevanceAssessment,
    RemovalStats,
    UserStory,
    criterion_id,
)
from cruise.service import create_app
from cruise.store import Store

from conftest import make_issue

GHERKIN = (
    "Scenario: Coupon acceptance\n"
    "GIVEN a valid coupon\n"
    "WHEN the customer checks out\n"
    "THEN the discount is applied"
)

CLOCK = lambda: "2024-06-05T12:00:00Z"  # noqa: E731


def add_criterion(
    store: Store,
    story_id: str,
    number: int,
    *,
    label: str = "relevant",
    malformed: bool = False,
) -> str:
    issue = make_issue(str(number), tracker="q", title=f"Bug {number}", body=f"Problem {number}.")
    store.put_raw_issue(issue)
    store.put_preprocessed(
        PreprocessedIssue(
            issue_id=issue.ref,
            text=f"Problem {number}.",
            dropped=False,
            drop_reason=None,
            removal_stats=RemovalStats(),
        )
    )
    cid = criterion_id(story_id, issue.ref)
    store.put_criterion(
        GeneratedCriterion(
            id=cid,
            story_id=story_id,
            issue_id=issue.ref,
            raw_text=GHERKIN if not malformed else "chatter",
            scenario=None if malformed else parse_scenario(GHERKIN),
            malformed=malformed,
            created_at="2024-06-02T00:00:00Z",
        )
    )
    if not malformed:
        store.put_assessment(
            RelevanceAssessment(
                criterion_id=cid,
                label=label,
                explanation=f"insight for {cid}",
                assessor_backend="a",
            )
        )
    return cid


def populate(store: Store) -> dict[str, str]:
    for story_id, text in (
        ("USA", "As a customer, I want coupons."),
        ("USB", "As a customer, I want receipts."),
    ):
        store.put_user_story(
            UserStory(id=story_id, project="shop", text=text, existing_criteria=("GIVEN g THEN t",))
        )
    ids = {
        "a1": add_criterion(store, "USA", 1),
        "a2": add_criterion(store, "USA", 2),
        "b1": add_criterion(store, "USB", 3),
    }
    # Never eligible: assessed irrelevant, or parse failure.
    ids["irrelevant"] = add_criterion(store, "USA", 4, label="irrelevant")
    ids["malformed"] = add_criterion(store, "USA", 5, malformed=True)
    return ids


@pytest.fixture
def service(store):
    ids = populate(store)
    app = create_app(store, threshold_m=2, panel_n=3, queue_seed=0, clock=CLOCK)
    with TestClient(app) as client:
        yield client, store, ids


def decide(client, cid: str, reviewer: str, verdict: str = "approved"):
    response = client.post(
        f"/api/criteria/{cid}/decision", json={"reviewer": reviewer, "verdict": verdict}
    )
    assert response.status_code == 200, response.text
    return response.json()


class TestStoryList:
    def test_lists_only_queue_stories_with_counts(self, service):
        client, _, ids = service
        body = client.get("/api/stories").json()
        assert body["total"] == 2
        assert [item["id"] for item in body["items"]] == ["USA", "USB"]
        usa, usb = body["items"]
        assert usa["total_criteria"] == 2  # irrelevant + malformed excluded
        assert usb["total_criteria"] == 1
        assert usa["decided"] == 0 and usa["pending"] == 2
        assert usa["existing_criteria"] == ["GIVEN g THEN t"]

    def test_pagination(self, service):
        client, _, _ = service
        body = client.get("/api/stories", params={"offset": 1, "limit": 1}).json()
        assert [item["id"] for item in body["items"]] == ["USB"]
        assert body["total"] == 2 and body["offset"] == 1 and body["limit"] == 1

    def test_bad_pagination_is_validation_error(self, service):
        client, _, _ = service
        response = client.get("/api/stories", params={"limit": 0})
        assert response.status_code == 422
        assert response.json()["code"] == "validation_error"

    def test_decided_counts_are_reviewer_aware(self, service):
        client, _, ids = service
        decide(client, ids["a1"], "alice")
        with_alice = client.get("/api/stories", params={"reviewer": "alice"}).json()
        with_bob = client.get("/api/stories", params={"reviewer": "bob"}).json()
        anyone = client.get("/api/stories").json()
        assert with_alice["items"][0]["decided"] == 1
        assert with_bob["items"][0]["decided"] == 0
        assert anyone["items"][0]["decided"] == 1  # any reviewer counts

    def test_queue_recomputed_per_request(self, service):
        client, store, _ = service
        assert client.get("/api/stories").json()["items"][0]["total_criteria"] == 2
        add_criterion(store, "USA", 6)
        assert client.get("/api/stories").json()["items"][0]["total_criteria"] == 3


class TestCriteriaView:
    def test_criterion_payload(self, service):
        client, _, ids = service
        body = client.get("/api/stories/USA/criteria").json()
        assert body["story"]["id"] == "USA"
        views = body["criteria"]
        assert [v["id"] for v in views] == sorted([ids["a1"], ids["a2"]])
        view = views[0]
        assert view["scenario_text"].startswith("Scenario: Coupon acceptance")
        assert view["source_issue_text"].splitlines()[0] == "Bug 1"
        assert view["explanation"] == f"insight for {ids['a1']}"
        assert view["decisions"] == []
        assert view["my_decision"] is None
        assert view["consensus"] is None

    def test_unknown_story_404(self, service):
        client, _, _ = service
        response = client.get("/api/stories/NOPE/criteria")
        assert response.status_code == 404
        assert response.json() == {
            "code": "unknown_story",
            "message": "no user story 'NOPE'",
        }

    def test_excluded_criteria_never_served(self, service):
        client, _, ids = service
        views = client.get("/api/stories/USA/criteria").json()["criteria"]
        served = {v["id"] for v in views}
        assert ids["irrelevant"] not in served
        assert ids["malformed"] not in served


class TestIndependence:
    def test_other_verdicts_hidden_until_own_decision(self, service):
        client, _, ids = service
        decide(client, ids["a1"], "alice")

        for params in ({}, {"reviewer": "bob"}):
            view = client.get("/api/stories/USA/criteria", params=params).json()["criteria"][0]
            assert view["decisions"] == []
            assert view["my_decision"] is None
            assert view["consensus"] is None

        mine = client.get("/api/stories/USA/criteria", params={"reviewer": "alice"}).json()[
            "criteria"
        ][0]
        assert mine["my_decision"]["verdict"] == "approved"
        assert [d["reviewer"] for d in mine["decisions"]] == ["alice"]
        assert mine["consensus"]["approvals"] == 1

    def test_deciding_reveals_everyone(self, service):
        client, _, ids = service
        decide(client, ids["a1"], "alice")
        decide(client, ids["a1"], "bob", "declined")
        view = client.get("/api/stories/USA/criteria", params={"reviewer": "bob"}).json()[
            "criteria"
        ][0]
        assert {d["reviewer"] for d in view["decisions"]} == {"alice", "bob"}
        assert view["consensus"]["declines"] == 1


class TestDecisions:
    def test_post_returns_decision_and_consensus(self, service):
        client, _, ids = service
        body = decide(client, ids["a1"], "alice")
        assert body["decision"] == {
            "reviewer": "alice",
            "verdict": "approved",
            "decided_at": CLOCK(),
        }
        assert body["consensus"] == {
            "approvals": 1,
            "declines": 0,
            "decided": 1,
            "threshold_m": 2,
            "panel_n": 3,
            "accepted": False,
        }

    def test_redecision_latest_wins(self, service):
        client, store, ids = service
        decide(client, ids["a1"], "alice", "approved")
        body = decide(client, ids["a1"], "alice", "declined")
        assert body["consensus"]["decided"] == 1
        assert body["consensus"]["approvals"] == 0
        decisions = store.decisions_for_criterion(ids["a1"])
        assert [(d.reviewer, d.verdict) for d in decisions] == [("alice", "declined")]

    def test_consensus_flips_exactly_at_threshold(self, service):
        client, _, ids = service
        assert decide(client, ids["a1"], "alice")["consensus"]["accepted"] is False
        second = decide(client, ids["a1"], "bob")
        assert second["consensus"]["accepted"] is True  # m=2 reached
        third = decide(client, ids["a1"], "carol", "declined")
        assert third["consensus"] == {
            "approvals": 2,
            "declines": 1,
            "decided": 3,
            "threshold_m": 2,
            "panel_n": 3,
            "accepted": True,
        }

    def test_unknown_criterion_404(self, service):
        client, _, ids = service
        for cid in ("USA~q~99", ids["irrelevant"], ids["malformed"]):
            response = client.post(
                f"/api/criteria/{cid}/decision",
                json={"reviewer": "alice", "verdict": "approved"},
            )
            assert response.status_code == 404
            assert response.json()["code"] == "unknown_criterion"

    @pytest.mark.parametrize(
        "body",
        [
            {"verdict": "approved"},
            {"reviewer": "alice"},
            {"reviewer": "alice", "verdict": "maybe"},
            {"reviewer": "", "verdict": "approved"},
            {"reviewer": "   ", "verdict": "approved"},
        ],
    )
    def test_invalid_decision_bodies(self, service, body):
        client, _, ids = service
        response = client.post(f"/api/criteria/{ids['a1']}/decision", json=body)
        assert response.status_code == 422
        assert response.json()["code"] == "validation_error"

    def test_decisions_survive_restart(self, service, tmp_path):
        client, store, ids = service
        decide(client, ids["a1"], "alice")
        reopened = Store(store.root)
        app = create_app(reopened, threshold_m=2, panel_n=3, queue_seed=0)
        with TestClient(app) as fresh:
            view = fresh.get(
                "/api/stories/USA/criteria", params={"reviewer": "alice"}
            ).json()["criteria"][0]
            assert view["my_decision"]["verdict"] == "approved"


class TestReport:
    EMPTY = {
        "raters": [],
        "per_rater_approval": {},
        "pairwise_agreement": {},
        "per_rater_average_agreement": {},
        "overall_average_agreement": None,
        "mean_pairwise_kappa": None,
        "gwet_ac1": None,
        "consensus_threshold": 2,
        "panel_n": 3,
        "consensus_accepted": [],
        "queue_size": 3,
        "decided_items": 0,
        "total_decisions": 0,
    }

    def test_empty_report_shape(self, service):
        client, _, _ = service
        assert client.get("/api/report").json() == self.EMPTY

    def test_report_matches_metrics_module(self, service):
        client, store, ids = service
        decide(client, ids["a1"], "alice")
        decide(client, ids["a1"], "bob")
        decide(client, ids["a2"], "alice", "declined")
        decide(client, ids["a2"], "bob")
        decide(client, ids["b1"], "alice")

        body = client.get("/api/report").json()
        records = [
            (d.criterion_id, d.reviewer, d.verdict) for d in store.list_review_decisions()
        ]
        matrix = metrics.AnnotationMatrix.from_records(records)
        agg = metrics.agreement_report(matrix, 2)
        assert body["raters"] == ["alice", "bob"]
        assert body["per_rater_approval"] == agg.per_rater_approval
        assert body["pairwise_agreement"] == agg.pairwise
        assert body["overall_average_agreement"] == agg.overall_average
        assert body["mean_pairwise_kappa"] == agg.mean_kappa
        assert body["gwet_ac1"] == agg.ac1
        assert body["consensus_accepted"] == sorted(agg.consensus_accepted)
        assert body["decided_items"] == 3
        assert body["total_decisions"] == 5
        assert body["queue_size"] == 3

    def test_report_ignores_decisions_outside_current_queue(self, service):
        client, store, ids = service
        decide(client, ids["a1"], "alice")
        decide(client, ids["a2"], "alice")
        # A tighter per-story cap shrinks the queue; decisions on evicted
        # criteria must vanish from the report rather than skew it.
        capped = create_app(store, threshold_m=2, panel_n=3, queue_seed=0, criteria_per_story_cap=1)
        with TestClient(capped) as tight:
            body = tight.get("/api/report").json()
            assert body["queue_size"] == 2  # one per story
            assert body["total_decisions"] == 1


class TestValidationAndStatic:
    def test_threshold_must_fit_panel(self, store):
        populate(store)
        with pytest.raises(ValueError):
            create_app(store, threshold_m=0, panel_n=4)
        with pytest.raises(ValueError):
            create_app(store, threshold_m=5, panel_n=4)

    def test_static_ui_served_with_api_intact(self, store, tmp_path):
        populate(store)
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>review</title>", "utf-8")
        app = create_app(store, threshold_m=2, panel_n=3, ui_dir=ui)
        with TestClient(app) as client:
            assert "review" in client.get("/").text
            assert client.get("/api/stories").status_code == 200

    def test_no_ui_dir_root_is_404(self, service):
        client, _, _ = service
        assert client.get("/").status_code == 404
