"""HTTP service for the human review of generated acceptance criteria.

The queue contains only well-formed criteria assessed relevant, capped
per story by seeded sampling. Reviewers are self-declared names; a
reviewer sees other verdicts (and the consensus tally) for a criterion
only after deciding it themselves, mirroring an independent-review
protocol. All responses derive purely from store state.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import metrics, schemas
from .gherkin import serialize_scenario
from .models import Clock, GeneratedCriterion, ReviewDecision, split_issue_ref, utcnow
from .pipeline import select_review_queue
from .store import IntegrityError, Store


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(
    store: Store,
    *,
    threshold_m: int = 3,
    panel_n: int = 4,
    queue_seed: int = 0,
    criteria_per_story_cap: int = 10,
    ui_dir: str | Path | None = None,
    clock: Clock = utcnow,
) -> FastAPI:
    if threshold_m < 1 or threshold_m > panel_n:
        raise ValueError("threshold_m must satisfy 1 <= m <= panel_n")
    app = FastAPI(title="acceptance criteria review", docs_url=None, redoc_url=None)

    @app.exception_handler(HTTPException)
    async def http_error(_request: Request, exc: HTTPException) -> JSONResponse:
        detail = exc.detail
        if isinstance(detail, dict) and "code" in detail:
            body = detail
        else:
            body = {"code": "error", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=body)

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"code": "validation_error", "message": str(exc.errors()[:3])},
        )

    def queue() -> list[GeneratedCriterion]:
        return select_review_queue(store, queue_seed, criteria_per_story_cap)

    def latest_decisions(criterion_id: str) -> list[ReviewDecision]:
        return store.decisions_for_criterion(criterion_id)

    def consensus_view(criterion_id: str) -> schemas.ConsensusView:
        decisions = latest_decisions(criterion_id)
        approvals = sum(1 for d in decisions if d.verdict == "approved")
        declines = len(decisions) - approvals
        return schemas.ConsensusView(
            approvals=approvals,
            declines=declines,
            decided=len(decisions),
            threshold_m=threshold_m,
            panel_n=panel_n,
            accepted=approvals >= threshold_m,
        )

    def decision_view(decision: ReviewDecision) -> schemas.DecisionView:
        return schemas.DecisionView(
            reviewer=decision.reviewer,
            verdict=decision.verdict,
            decided_at=decision.decided_at,
        )

    def source_issue_text(criterion: GeneratedCriterion) -> str:
        pre = store.get_preprocessed(criterion.issue_id)
        tracker, issue_id = split_issue_ref(criterion.issue_id)
        raw = store.get_raw_issue(tracker, issue_id)
        title = raw.title.strip() if raw is not None else ""
        text = pre.text if pre is not None else ""
        return f"{title}\n{text}" if title else text

    def criterion_view(
        criterion: GeneratedCriterion, reviewer: str | None
    ) -> schemas.CriterionView:
        decisions = latest_decisions(criterion.id)
        mine = next((d for d in decisions if reviewer and d.reviewer == reviewer), None)
        # verdicts of others stay hidden until the requesting reviewer decided
        visible = decisions if mine is not None else []
        assessment = store.get_assessment(criterion.id)
        return schemas.CriterionView(
            id=criterion.id,
            story_id=criterion.story_id,
            issue_id=criterion.issue_id,
            scenario_text=serialize_scenario(criterion.scenario),
            raw_text=criterion.raw_text,
            source_issue_text=source_issue_text(criterion),
            explanation=assessment.explanation if assessment else "",
            decisions=[decision_view(d) for d in visible],
            my_decision=decision_view(mine) if mine else None,
            consensus=consensus_view(criterion.id) if mine else None,
        )

    @app.get("/api/stories", response_model=schemas.StoryListResponse)
    def list_stories(
        offset: int = Query(0, ge=0),
        limit: int = Query(50, ge=1, le=500),
        reviewer: str | None = Query(None),
    ) -> schemas.StoryListResponse:
        by_story: dict[str, list[GeneratedCriterion]] = {}
        for criterion in queue():
            by_story.setdefault(criterion.story_id, []).append(criterion)
        story_ids = sorted(by_story)
        items = []
        for story_id in story_ids[offset : offset + limit]:
            story = store.get_user_story(story_id)
            group = by_story[story_id]
            if reviewer:
                decided = sum(
                    1
                    for c in group
                    if any(d.reviewer == reviewer for d in latest_decisions(c.id))
                )
            else:
                decided = sum(1 for c in group if latest_decisions(c.id))
            items.append(
                schemas.StoryListItem(
                    id=story_id,
                    project=story.project if story else "",
                    text=story.text if story else "",
                    existing_criteria=list(story.existing_criteria) if story else [],
                    total_criteria=len(group),
                    decided=decided,
                    pending=len(group) - decided,
                )
            )
        return schemas.StoryListResponse(
            items=items, total=len(story_ids), offset=offset, limit=limit
        )

    @app.get("/api/stories/{story_id}/criteria", response_model=schemas.StoryCriteriaResponse)
    def story_criteria(
        story_id: str, reviewer: str | None = Query(None)
    ) -> schemas.StoryCriteriaResponse:
        story = store.get_user_story(story_id)
        if story is None:
            raise _error(404, "unknown_story", f"no user story {story_id!r}")
        criteria = [c for c in queue() if c.story_id == story_id]
        return schemas.StoryCriteriaResponse(
            story=schemas.StoryView(
                id=story.id,
                project=story.project,
                text=story.text,
                existing_criteria=list(story.existing_criteria),
            ),
            criteria=[criterion_view(c, reviewer) for c in criteria],
        )

    @app.post("/api/criteria/{criterion_id}/decision", response_model=schemas.DecisionResponse)
    def post_decision(
        criterion_id: str, body: schemas.DecisionRequest
    ) -> schemas.DecisionResponse:
        in_queue = any(c.id == criterion_id for c in queue())
        if not in_queue:
            raise _error(
                404, "unknown_criterion", f"criterion {criterion_id!r} is not in the review queue"
            )
        decision = ReviewDecision(
            criterion_id=criterion_id,
            reviewer=body.reviewer.strip(),
            verdict=body.verdict,
            decided_at=clock(),
        )
        try:
            store.put_review_decision(decision)
        except IntegrityError as exc:
            raise _error(404, "unknown_criterion", str(exc))
        return schemas.DecisionResponse(
            decision=decision_view(decision),
            consensus=consensus_view(criterion_id),
        )

    @app.get("/api/report", response_model=schemas.ReportResponse)
    def report() -> schemas.ReportResponse:
        queue_ids = [c.id for c in queue()]
        queue_set = set(queue_ids)
        records = [
            (d.criterion_id, d.reviewer, d.verdict)
            for d in store.list_review_decisions()
            if d.criterion_id in queue_set
        ]
        raters = sorted({reviewer for _, reviewer, _ in records})
        if not records:
            return schemas.ReportResponse(
                raters=[],
                per_rater_approval={},
                pairwise_agreement={},
                per_rater_average_agreement={},
                overall_average_agreement=None,
                mean_pairwise_kappa=None,
                gwet_ac1=None,
                consensus_threshold=threshold_m,
                panel_n=panel_n,
                consensus_accepted=[],
                queue_size=len(queue_ids),
                decided_items=0,
                total_decisions=0,
            )
        matrix = metrics.AnnotationMatrix.from_records(records)
        agg = metrics.agreement_report(matrix, threshold_m)
        decided_items = len({item for item, _, _ in records})
        return schemas.ReportResponse(
            raters=list(raters),
            per_rater_approval={r: agg.per_rater_approval[r] for r in matrix.raters},
            pairwise_agreement=agg.pairwise,
            per_rater_average_agreement=agg.per_rater_average,
            overall_average_agreement=agg.overall_average,
            mean_pairwise_kappa=agg.mean_kappa,
            gwet_ac1=agg.ac1,
            consensus_threshold=threshold_m,
            panel_n=panel_n,
            consensus_accepted=sorted(agg.consensus_accepted),
            queue_size=len(queue_ids),
            decided_items=decided_items,
            total_decisions=len(records),
        )

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
