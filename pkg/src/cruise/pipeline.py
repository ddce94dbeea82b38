"""Orchestration of the LLM stages: ensemble matching, criterion
generation, and relevance assessment, with seeded sampling and durable
checkpoints so interrupted runs resume without repeating work.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Protocol, Sequence

from . import gateway
from .gherkin import GherkinParseError, parse_scenario, serialize_scenario
from .models import (
    Clock,
    GeneratedCriterion,
    MatchRecord,
    PreprocessedIssue,
    RelevanceAssessment,
    SampleSpec,
    UserStory,
    criterion_id,
    split_issue_ref,
    utcnow,
)
from .store import Store

_MASK64 = (1 << 64) - 1

RE_ASK_ONE_WORD = "Answer with exactly one word."
RE_ASK_GHERKIN = "Output only the Gherkin scenario."

HISTOGRAM_BUCKETS = ("0", "1-10", "11-20", "21-30", "31-50", ">50")

STAGES = ("match", "generate", "assess")


def splitmix64(seed: int) -> Iterator[int]:
    """The SplitMix64 sequence; platform-independent 64-bit outputs."""
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def sample(population: Sequence[str], n: int, seed: int) -> list[str]:
    """First n items of the seeded Fisher-Yates shuffle of population."""
    items = list(population)
    if n > len(items):
        raise ValueError(f"sample size {n} exceeds population of {len(items)}")
    rng = splitmix64(seed)
    for i in range(len(items) - 1, 0, -1):
        j = next(rng) % (i + 1)
        items[i], items[j] = items[j], items[i]
    return items[:n]


def derive_seed(seed: int, token: str) -> int:
    """Stable per-token sub-seed (used for per-story cap sampling)."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return (seed ^ int.from_bytes(digest[:8], "big")) & _MASK64


def majority_vote(votes: Sequence[int]) -> int:
    """1 iff yes-votes reach half the ensemble, rounded up (ties match)."""
    votes = list(votes)
    if not votes:
        raise ValueError("votes must be non-empty")
    if any(v not in (0, 1) for v in votes):
        raise ValueError("votes must be 0 or 1")
    return 1 if sum(votes) >= math.ceil(len(votes) / 2) else 0


def histogram_bucket(count: int) -> str:
    if count == 0:
        return "0"
    if count <= 10:
        return "1-10"
    if count <= 20:
        return "11-20"
    if count <= 30:
        return "21-30"
    if count <= 50:
        return "31-50"
    return ">50"


class Translator(Protocol):
    def translate(self, text: str) -> str: ...


class TranslationError(RuntimeError):
    pass


class FixtureTranslator:
    """Exact-string lookup table; unknown text raises."""

    def __init__(self, mapping: dict[str, str]):
        self.mapping = dict(mapping)

    def translate(self, text: str) -> str:
        try:
            return self.mapping[text]
        except KeyError:
            raise TranslationError(f"no translation recorded for: {text[:80]!r}")


def translate_story(
    story: UserStory, translator: Translator | None
) -> tuple[UserStory | None, str | None]:
    """English stories pass through. Non-English ones are translated when
    a translator exists (text and existing criteria); without one the
    story passes through unchanged and a warning is returned. A
    translator failure returns (None, reason) and the story is skipped.
    """
    if story.language == "english":
        return story, None
    if translator is None:
        return story, f"story {story.id}: not in English and no translator configured"
    try:
        translated = replace(
            story,
            text=translator.translate(story.text),
            existing_criteria=tuple(translator.translate(c) for c in story.existing_criteria),
            language="english",
        )
    except TranslationError as exc:
        return None, f"story {story.id}: translation failed: {exc}"
    return translated, None


@dataclass
class RunReport:
    """Aggregated outcome of one pipeline run over the sampled sets."""

    seed: int
    stories_sampled: int
    issues_sampled: int
    pairs_evaluated: int = 0
    matches: int = 0
    criteria_generated: int = 0
    criteria_malformed: int = 0
    relevant: int = 0
    irrelevant: int = 0
    histogram: dict[str, int] = field(default_factory=dict)
    per_story_criteria: dict[str, int] = field(default_factory=dict)
    pending: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    skipped_stories: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        rows = [
            ("seed", self.seed),
            ("stories sampled", self.stories_sampled),
            ("issues sampled", self.issues_sampled),
            ("pairs evaluated", self.pairs_evaluated),
            ("matches", self.matches),
            ("criteria generated", self.criteria_generated),
            ("criteria malformed", self.criteria_malformed),
            ("assessed relevant", self.relevant),
            ("assessed irrelevant", self.irrelevant),
            ("pairs pending", len(self.pending)),
        ]
        width = max(len(label) for label, _ in rows)
        lines = [f"{label:<{width}}  {value}" for label, value in rows]
        lines.append("")
        lines.append("generated criteria per story")
        for bucket in HISTOGRAM_BUCKETS:
            lines.append(f"  {bucket:<6} {self.histogram.get(bucket, 0)}")
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        for story_id in self.skipped_stories:
            lines.append(f"skipped: {story_id}")
        return "\n".join(lines)

    def to_csv_rows(self) -> list[tuple[str, str]]:
        rows: list[tuple[str, str]] = [
            ("seed", str(self.seed)),
            ("stories_sampled", str(self.stories_sampled)),
            ("issues_sampled", str(self.issues_sampled)),
            ("pairs_evaluated", str(self.pairs_evaluated)),
            ("matches", str(self.matches)),
            ("criteria_generated", str(self.criteria_generated)),
            ("criteria_malformed", str(self.criteria_malformed)),
            ("relevant", str(self.relevant)),
            ("irrelevant", str(self.irrelevant)),
            ("pairs_pending", str(len(self.pending))),
        ]
        for bucket in HISTOGRAM_BUCKETS:
            rows.append((f"stories_with_criteria_{bucket}", str(self.histogram.get(bucket, 0))))
        return rows


class Pipeline:
    """Runs the three stages against a store with injected backends."""

    def __init__(
        self,
        store: Store,
        ensemble: Sequence[gateway.ChatBackend],
        generator: gateway.ChatBackend,
        assessor: gateway.ChatBackend,
        domain_description: str,
        *,
        translator: Translator | None = None,
        clock: Clock = utcnow,
    ):
        if not ensemble:
            raise ValueError("the matching ensemble needs at least one backend")
        self.store = store
        self.ensemble = list(ensemble)
        self.generator = generator
        self.assessor = assessor
        self.domain_description = domain_description
        self.translator = translator
        self.clock = clock

    # -- stage operations ---------------------------------------------------

    def issue_prompt_text(self, pre: PreprocessedIssue) -> str:
        tracker, issue_id = split_issue_ref(pre.issue_id)
        raw = self.store.get_raw_issue(tracker, issue_id)
        title = raw.title.strip() if raw is not None else ""
        return f"{title}\n{pre.text}" if title else pre.text

    def match_pair(self, story: UserStory, pre: PreprocessedIssue) -> MatchRecord:
        """One binary vote per ensemble backend, then majority voting.

        An already-persisted record short-circuits without any backend
        call. Unparseable replies get one re-ask and then count as "no".
        """
        existing = self.store.get_match_record(story.id, pre.issue_id)
        if existing is not None:
            return existing
        prompt = gateway.render_prompt(
            "match",
            {
                "domain_description": self.domain_description,
                "user_story": story.text,
                "issue": self.issue_prompt_text(pre),
            },
        )
        votes: list[tuple[str, int]] = []
        for backend in self.ensemble:
            verdict = gateway.parse_binary(backend.complete(prompt).raw)
            if verdict == "unparseable":
                retry = gateway.append_instruction(prompt, RE_ASK_ONE_WORD)
                verdict = gateway.parse_binary(backend.complete(retry).raw)
                if verdict == "unparseable":
                    verdict = "no"
            votes.append((backend.name, 1 if verdict == "yes" else 0))
        record = MatchRecord(
            story_id=story.id,
            issue_id=pre.issue_id,
            votes=tuple(votes),
            decision=majority_vote([vote for _, vote in votes]),
        )
        self.store.put_match_record(record)
        return record

    def generate_criterion(
        self, story: UserStory, pre: PreprocessedIssue
    ) -> GeneratedCriterion:
        """Ask the generator for one Gherkin scenario for a matched pair.

        A reply that does not parse gets one regeneration with an added
        instruction; a second failure stores the criterion as malformed.
        """
        cid = criterion_id(story.id, pre.issue_id)
        existing = self.store.get_criterion(cid)
        if existing is not None:
            return existing
        prompt = gateway.render_prompt(
            "generate",
            {"issue": self.issue_prompt_text(pre), "user_story": story.text},
        )
        raw = self.generator.complete(prompt).raw
        scenario = None
        try:
            scenario = parse_scenario(raw)
        except GherkinParseError:
            retry = gateway.append_instruction(prompt, RE_ASK_GHERKIN)
            raw = self.generator.complete(retry).raw
            try:
                scenario = parse_scenario(raw)
            except GherkinParseError:
                scenario = None
        criterion = GeneratedCriterion(
            id=cid,
            story_id=story.id,
            issue_id=pre.issue_id,
            raw_text=raw,
            scenario=scenario,
            malformed=scenario is None,
            created_at=self.clock(),
        )
        self.store.put_criterion(criterion)
        return criterion

    def assess_criterion(
        self, story: UserStory, criterion: GeneratedCriterion, issue_text: str
    ) -> RelevanceAssessment:
        """Label a well-formed criterion relevant/irrelevant.

        Unparseable replies get one re-ask and then default to
        irrelevant, so nothing unvetted reaches the review queue.
        """
        existing = self.store.get_assessment(criterion.id)
        if existing is not None:
            return existing
        if criterion.scenario is None:
            raise ValueError(f"criterion {criterion.id} is malformed; nothing to assess")
        existing_text = "\n".join(story.existing_criteria) if story.existing_criteria else "none"
        prompt = gateway.render_prompt(
            "assess",
            {
                "user_story": story.text,
                "acceptance_criteria": existing_text,
                "new_criterion": serialize_scenario(criterion.scenario),
                "issue": issue_text,
            },
        )
        raw = self.assessor.complete(prompt).raw
        label, explanation = gateway.parse_label(raw)
        if label == "unparseable":
            retry = gateway.append_instruction(prompt, RE_ASK_ONE_WORD)
            raw = self.assessor.complete(retry).raw
            label, explanation = gateway.parse_label(raw)
            if label == "unparseable":
                label, explanation = "irrelevant", raw.strip()
        assessment = RelevanceAssessment(
            criterion_id=criterion.id,
            label=label,
            explanation=explanation,
            assessor_backend=self.assessor.name,
        )
        self.store.put_assessment(assessment)
        return assessment

    # -- sampling ------------------------------------------------------------

    def sampled_story_ids(self, spec: SampleSpec) -> list[str]:
        ids = [story.id for story in self.store.list_user_stories()]
        if spec.story_count is None:
            return ids
        return sample(ids, spec.story_count, spec.seed)

    def sampled_issue_ids(self, spec: SampleSpec) -> list[str]:
        ids = [p.issue_id for p in self.store.list_preprocessed() if not p.dropped]
        if spec.issue_count is None:
            return ids
        # distinct sub-seed so story and issue samples are independent
        return sample(ids, spec.issue_count, derive_seed(spec.seed, "issues"))

    # -- the run loop ----------------------------------------------------------

    def run(self, spec: SampleSpec, stages: Sequence[str] = STAGES) -> RunReport:
        """Process every sampled story x issue pair through the requested
        stages, checkpointing each completed (stage, story, issue) so a
        rerun never repeats finished work.
        """
        for stage in stages:
            if stage not in STAGES:
                raise ValueError(f"unknown stage {stage!r}")
        story_ids = self.sampled_story_ids(spec)
        issue_ids = self.sampled_issue_ids(spec)
        report = RunReport(
            seed=spec.seed,
            stories_sampled=len(story_ids),
            issues_sampled=len(issue_ids),
        )
        for story_id in story_ids:
            story = self.store.get_user_story(story_id)
            translated, warning = translate_story(story, self.translator)
            if warning is not None:
                report.warnings.append(warning)
            if translated is None:
                report.skipped_stories.append(story_id)
                continue
            for issue_id in issue_ids:
                pre = self.store.get_preprocessed(issue_id)
                self._run_pair(translated, pre, stages, report)
        self._aggregate(report, story_ids, issue_ids)
        return report

    def _run_pair(
        self,
        story: UserStory,
        pre: PreprocessedIssue,
        stages: Sequence[str],
        report: RunReport,
    ) -> None:
        sid, iid = story.id, pre.issue_id
        if "match" in stages:
            if self.store.has_checkpoint("match", sid, iid):
                record = self.store.get_match_record(sid, iid)
            else:
                try:
                    record = self.match_pair(story, pre)
                except gateway.BackendUnavailable as exc:
                    report.pending.append(f"match {sid} x {iid}: {exc}")
                    return
                self.store.put_checkpoint("match", sid, iid)
        else:
            record = self.store.get_match_record(sid, iid)
        if record is None or record.decision != 1:
            return

        cid = criterion_id(sid, iid)
        if "generate" in stages:
            if self.store.has_checkpoint("generate", sid, iid):
                criterion = self.store.get_criterion(cid)
            else:
                try:
                    criterion = self.generate_criterion(story, pre)
                except gateway.BackendUnavailable as exc:
                    report.pending.append(f"generate {sid} x {iid}: {exc}")
                    return
                self.store.put_checkpoint("generate", sid, iid)
        else:
            criterion = self.store.get_criterion(cid)
        if criterion is None or criterion.malformed:
            return

        if "assess" in stages and not self.store.has_checkpoint("assess", sid, iid):
            try:
                self.assess_criterion(story, criterion, self.issue_prompt_text(pre))
            except gateway.BackendUnavailable as exc:
                report.pending.append(f"assess {sid} x {iid}: {exc}")
                return
            self.store.put_checkpoint("assess", sid, iid)

    def _aggregate(
        self, report: RunReport, story_ids: Sequence[str], issue_ids: Sequence[str]
    ) -> None:
        story_set, issue_set = set(story_ids), set(issue_ids)
        per_story = {story_id: 0 for story_id in story_ids}
        for record in self.store.list_match_records():
            if record.story_id in story_set and record.issue_id in issue_set:
                report.pairs_evaluated += 1
                report.matches += record.decision
        criteria_ids = set()
        for criterion in self.store.list_criteria():
            if criterion.story_id in story_set and criterion.issue_id in issue_set:
                if criterion.malformed:
                    report.criteria_malformed += 1
                else:
                    report.criteria_generated += 1
                    per_story[criterion.story_id] += 1
                    criteria_ids.add(criterion.id)
        for assessment in self.store.list_assessments():
            if assessment.criterion_id in criteria_ids:
                if assessment.label == "relevant":
                    report.relevant += 1
                else:
                    report.irrelevant += 1
        report.per_story_criteria = per_story
        histogram = {bucket: 0 for bucket in HISTOGRAM_BUCKETS}
        for count in per_story.values():
            histogram[histogram_bucket(count)] += 1
        report.histogram = histogram

    def build_report(self, spec: SampleSpec) -> RunReport:
        """Recompute the RunReport for the sampled sets from the store,
        without touching any backend."""
        story_ids = self.sampled_story_ids(spec)
        issue_ids = self.sampled_issue_ids(spec)
        report = RunReport(
            seed=spec.seed,
            stories_sampled=len(story_ids),
            issues_sampled=len(issue_ids),
        )
        self._aggregate(report, story_ids, issue_ids)
        return report


def select_review_queue(
    store: Store, seed: int, criteria_per_story_cap: int
) -> list[GeneratedCriterion]:
    """Well-formed, relevant criteria grouped by story, capped per story
    by seeded sampling; order is story id then criterion id."""
    relevant_ids = {
        a.criterion_id for a in store.list_assessments() if a.label == "relevant"
    }
    by_story: dict[str, list[GeneratedCriterion]] = {}
    for criterion in store.list_criteria():
        if criterion.malformed or criterion.id not in relevant_ids:
            continue
        by_story.setdefault(criterion.story_id, []).append(criterion)
    queue: list[GeneratedCriterion] = []
    for story_id in sorted(by_story):
        group = sorted(by_story[story_id], key=lambda c: c.id)
        if len(group) > criteria_per_story_cap:
            chosen = set(
                sample(
                    [c.id for c in group],
                    criteria_per_story_cap,
                    derive_seed(seed, story_id),
                )
            )
            group = [c for c in group if c.id in chosen]
        queue.extend(group)
    return queue
