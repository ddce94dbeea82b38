#!/usr/bin/env python3
"""Boots a review service over a freshly seeded store for the UI test suite.

Usage: python3 serve_review.py PORT STORE_DIR

Seeds three user stories with ten well-formed, relevant criteria in total
(plus one irrelevant and one malformed criterion that must stay out of the
queue), then serves the review API on 127.0.0.1:PORT with a 3-of-4 consensus
panel.
"""

from __future__ import annotations

import sys

import uvicorn

from cruise.gherkin import parse_scenario
from cruise.models import (
    GeneratedCriterion,
    PreprocessedIssue,
    RawIssue,
    RelevanceAssessment,
    RemovalStats,
    UserStory,
    criterion_id,
)
from cruise.service import create_app
from cruise.store import Store

STORIES = (
    (
        "USA",
        "web-shop",
        "As a shopper, I want to apply coupon codes, so that I pay less.",
        ("GIVEN a valid coupon WHEN I check out THEN the discount is applied",),
    ),
    (
        "USB",
        "web-shop",
        "As a shopper, I want an emailed receipt, so that I can file expenses.",
        (),
    ),
    (
        "USC",
        "web-shop",
        "As an accountant, I want order exports, so that I can reconcile revenue.",
        ("GIVEN finished orders WHEN the export runs THEN a file is produced",),
    ),
)

CRITERIA_PER_STORY = {"USA": 4, "USB": 3, "USC": 3}


def build_scenario(number: int) -> str:
    return (
        f"Scenario: Regression {number} stays fixed\n"
        f"GIVEN the shop is configured as in report {number}\n"
        "AND a customer is signed in\n"
        "WHEN the customer completes a checkout\n"
        f"THEN failure {number} does not happen again"
    )


def add_criterion(
    store: Store,
    story_id: str,
    number: int,
    *,
    label: str = "relevant",
    malformed: bool = False,
) -> None:
    issue = RawIssue(
        id=str(number),
        tracker="fix",
        url=f"https://tracker.example/fix/issues/{number}",
        title=f"Bug {number}",
        body=f"Something breaks in flow {number}.",
        labels=("bug",),
        state="closed",
        created_at="2024-01-01T00:00:00Z",
        fetched_at="2024-06-01T00:00:00Z",
    )
    store.put_raw_issue(issue)
    store.put_preprocessed(
        PreprocessedIssue(
            issue_id=issue.ref,
            text=f"Bug {number}\nSomething breaks in flow {number}.",
            dropped=False,
            drop_reason=None,
            removal_stats=RemovalStats(),
        )
    )
    text = build_scenario(number)
    cid = criterion_id(story_id, issue.ref)
    store.put_criterion(
        GeneratedCriterion(
            id=cid,
            story_id=story_id,
            issue_id=issue.ref,
            raw_text="chatter without any steps" if malformed else text,
            scenario=None if malformed else parse_scenario(text),
            malformed=malformed,
            created_at="2024-06-02T00:00:00Z",
        )
    )
    if not malformed:
        store.put_assessment(
            RelevanceAssessment(
                criterion_id=cid,
                label=label,
                explanation=f"covers regression {number}",
                assessor_backend="assessor",
            )
        )


def seed(store: Store) -> None:
    number = 0
    for story_id, project, text, existing in STORIES:
        store.put_user_story(
            UserStory(id=story_id, project=project, text=text, existing_criteria=existing)
        )
        for _ in range(CRITERIA_PER_STORY[story_id]):
            number += 1
            add_criterion(store, story_id, number)
    # Stay out of the queue: one assessed irrelevant, one that failed to parse.
    add_criterion(store, "USA", 90, label="irrelevant")
    add_criterion(store, "USB", 91, malformed=True)


def main() -> None:
    port = int(sys.argv[1])
    store = Store(sys.argv[2])
    if store.count("user_stories") == 0:
        seed(store)
    app = create_app(store, threshold_m=3, panel_n=4, queue_seed=0)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
