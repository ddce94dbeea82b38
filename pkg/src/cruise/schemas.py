"""Request/response bodies of the review HTTP API (all snake_case)."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    code: str
    message: str


class DecisionView(BaseModel):
    reviewer: str
    verdict: Literal["approved", "declined"]
    decided_at: str


class ConsensusView(BaseModel):
    approvals: int
    declines: int
    decided: int
    threshold_m: int
    panel_n: int
    accepted: bool


class StoryListItem(BaseModel):
    id: str
    project: str
    text: str
    existing_criteria: list[str]
    total_criteria: int
    decided: int
    pending: int


class StoryListResponse(BaseModel):
    items: list[StoryListItem]
    total: int
    offset: int
    limit: int


class StoryView(BaseModel):
    id: str
    project: str
    text: str
    existing_criteria: list[str]


class CriterionView(BaseModel):
    id: str
    story_id: str
    issue_id: str
    scenario_text: str
    raw_text: str
    source_issue_text: str
    explanation: str
    decisions: list[DecisionView]
    my_decision: DecisionView | None = None
    consensus: ConsensusView | None = None


class StoryCriteriaResponse(BaseModel):
    story: StoryView
    criteria: list[CriterionView]


class DecisionRequest(BaseModel):
    reviewer: str = Field(min_length=1, pattern=r"\S")
    verdict: Literal["approved", "declined"]


class DecisionResponse(BaseModel):
    decision: DecisionView
    consensus: ConsensusView


class ReportResponse(BaseModel):
    raters: list[str]
    per_rater_approval: dict[str, float | None]
    pairwise_agreement: dict[str, dict[str, float | None]]
    per_rater_average_agreement: dict[str, float | None]
    overall_average_agreement: float | None
    mean_pairwise_kappa: float | None
    gwet_ac1: float | None
    consensus_threshold: int
    panel_n: int
    consensus_accepted: list[str]
    queue_size: int
    decided_items: int
    total_decisions: int
