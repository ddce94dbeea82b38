// Pure HTML builders. Every function returns a string so the views can be
// unit-tested without a browser. All figures on the dashboard are stamped
// with data-field / data-value attributes carrying the untouched server
// value — the UI formats numbers for display but never computes its own.

import type { CriterionView, ReportResponse, StoryView } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

function attr(value: string | number | boolean | null): string {
  return escapeHtml(String(value));
}

export function formatPercent(value: number | null): string {
  if (value === null) return "—";
  return `${(value * 100).toFixed(1)}%`;
}

export function formatNumber(value: number | null): string {
  if (value === null) return "—";
  return value.toFixed(4);
}

export interface StepGroup {
  keyword: "GIVEN" | "WHEN" | "THEN";
  steps: string[];
}

export interface ScenarioView {
  title: string;
  groups: StepGroup[];
}

const STEP_LINE = /^(GIVEN|WHEN|THEN|AND|BUT)\b[\s:]*(.*)$/i;
const TITLE_LINE = /^scenario(?:\s+outline)?\s*:\s*(.*)$/i;

/**
 * Splits serialized scenario text into its title and keyword groups so steps
 * can be rendered under GIVEN / WHEN / THEN headers, with continuation steps
 * (AND / BUT lines) attached to the group they extend.
 */
export function splitScenario(text: string): ScenarioView {
  const view: ScenarioView = { title: "", groups: [] };
  let currentGroup: StepGroup | null = null;
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (!line) continue;
    const titleMatch = TITLE_LINE.exec(line);
    if (titleMatch) {
      view.title = titleMatch[1].trim();
      continue;
    }
    const stepMatch = STEP_LINE.exec(line);
    if (!stepMatch) continue;
    const keyword = stepMatch[1].toUpperCase();
    const body = stepMatch[2].trim();
    if (keyword === "AND" || keyword === "BUT") {
      if (currentGroup) currentGroup.steps.push(body);
      continue;
    }
    currentGroup = { keyword: keyword as StepGroup["keyword"], steps: [body] };
    view.groups.push(currentGroup);
  }
  return view;
}

function renderStepGroups(groups: StepGroup[]): string {
  return groups
    .map((group) => {
      const items = group.steps
        .map((step, index) =>
          index === 0
            ? `<li>${escapeHtml(step)}</li>`
            : `<li><span class="and-prefix">AND</span> ${escapeHtml(step)}</li>`,
        )
        .join("");
      return `<div class="step-group"><p class="keyword">${group.keyword}</p><ul>${items}</ul></div>`;
    })
    .join("");
}

function renderExistingCriteria(criteria: string[]): string {
  if (criteria.length === 0) {
    return `<p class="empty">none</p>`;
  }
  const items = criteria.map((text) => `<li>${escapeHtml(text)}</li>`).join("");
  return `<ul>${items}</ul>`;
}

function renderDecisionNote(criterion: CriterionView): string {
  const mine = criterion.my_decision;
  if (!mine) return "";
  if (mine.decided_at === "pending") {
    return `<p class="decision-note">Saving your decision…</p>`;
  }
  return `<p class="decision-note">You ${escapeHtml(mine.verdict)} this criterion at ${escapeHtml(mine.decided_at)}. Press the other button to change it.</p>`;
}

function renderConsensusNote(criterion: CriterionView): string {
  const consensus = criterion.consensus;
  if (!consensus) return "";
  const accepted = consensus.accepted
    ? ` — <span class="accepted">accepted</span>`
    : "";
  return `<p class="consensus-note">Panel: ${attr(consensus.approvals)} of ${attr(consensus.panel_n)} approvals, ${attr(consensus.declines)} declines (${attr(consensus.decided)} decided, needs ${attr(consensus.threshold_m)})${accepted}</p>`;
}

function renderOtherDecisions(criterion: CriterionView): string {
  const others = criterion.decisions.filter(
    (decision) => decision.reviewer !== criterion.my_decision?.reviewer,
  );
  if (others.length === 0) return "";
  const items = others
    .map(
      (decision) =>
        `<li>${escapeHtml(decision.reviewer)}: ${escapeHtml(decision.verdict)}</li>`,
    )
    .join("");
  return `<section class="other-decisions"><h4>Other reviewers</h4><ul>${items}</ul></section>`;
}

export function renderCriterionCard(
  story: StoryView,
  criterion: CriterionView,
  position: number,
  total: number,
): string {
  const scenario = splitScenario(criterion.scenario_text);
  const scenarioBody =
    scenario.groups.length > 0
      ? `<p class="title">${escapeHtml(scenario.title)}</p>${renderStepGroups(scenario.groups)}`
      : `<pre class="raw-text">${escapeHtml(criterion.raw_text)}</pre>`;
  const myVerdict = criterion.my_decision?.verdict ?? null;
  const approveClass = myVerdict === "approved" ? "approve active" : "approve";
  const declineClass = myVerdict === "declined" ? "decline active" : "decline";
  return `<article class="card criterion-card" data-criterion-id="${attr(criterion.id)}">
<p class="queue-position">Criterion ${attr(position)} of ${attr(total)}</p>
<section class="story">
<h3>${escapeHtml(story.id)} <span class="project">· ${escapeHtml(story.project)}</span></h3>
<p>${escapeHtml(story.text)}</p>
</section>
<section class="existing-criteria">
<h4>Existing acceptance criteria</h4>
${renderExistingCriteria(story.existing_criteria)}
</section>
<section class="scenario">
<h4>Proposed criterion</h4>
${scenarioBody}
</section>
<section class="source-issue">
<details>
<summary>Source issue ${escapeHtml(criterion.issue_id)}</summary>
<pre>${escapeHtml(criterion.source_issue_text)}</pre>
</details>
</section>
<section class="assessment">
<h4>Automated assessment</h4>
<p class="explanation">${escapeHtml(criterion.explanation)}</p>
</section>
<div class="actions">
<button type="button" class="${approveClass}" data-action="approve" aria-pressed="${myVerdict === "approved"}">Approve</button>
<button type="button" class="${declineClass}" data-action="decline" aria-pressed="${myVerdict === "declined"}">Decline</button>
</div>
${renderDecisionNote(criterion)}
${renderConsensusNote(criterion)}
${renderOtherDecisions(criterion)}
</article>`;
}

export function renderSummary(
  total: number,
  approved: number,
  declined: number,
): string {
  return `<section class="card summary-card">
<h2>End of queue</h2>
<p>You have decided ${attr(approved + declined)} of ${attr(total)} criteria.</p>
<p>${attr(approved)} approved · ${attr(declined)} declined</p>
<p class="hint">Press <kbd>←</kbd> to revisit a criterion, or open the dashboard.</p>
</section>`;
}

function statRow(label: string, field: string, raw: unknown, display: string): string {
  return `<dt>${escapeHtml(label)}</dt><dd data-field="${attr(field)}" data-value="${attr(String(raw))}">${escapeHtml(display)}</dd>`;
}

function renderRaterTable(report: ReportResponse): string {
  const rows = report.raters
    .map((rater) => {
      const approval = report.per_rater_approval[rater] ?? null;
      const average = report.per_rater_average_agreement[rater] ?? null;
      return `<tr><th>${escapeHtml(rater)}</th><td data-field="per_rater_approval.${attr(rater)}" data-value="${attr(String(approval))}">${formatPercent(approval)}</td><td data-field="per_rater_average_agreement.${attr(rater)}" data-value="${attr(String(average))}">${formatPercent(average)}</td></tr>`;
    })
    .join("");
  return `<table class="raters">
<thead><tr><th>Rater</th><th>Approval rate</th><th>Average agreement</th></tr></thead>
<tbody>${rows}</tbody>
</table>`;
}

function renderPairwiseTable(report: ReportResponse): string {
  const raters = report.raters;
  const header = raters.map((rater) => `<th>${escapeHtml(rater)}</th>`).join("");
  const rows = raters
    .map((rowRater) => {
      const cells = raters
        .map((colRater) => {
          if (rowRater === colRater) return `<td class="diagonal">·</td>`;
          const value = report.pairwise_agreement[rowRater]?.[colRater] ?? null;
          return `<td data-field="pairwise_agreement.${attr(rowRater)}.${attr(colRater)}" data-value="${attr(String(value))}">${formatPercent(value)}</td>`;
        })
        .join("");
      return `<tr><th>${escapeHtml(rowRater)}</th>${cells}</tr>`;
    })
    .join("");
  return `<table class="pairwise">
<thead><tr><th></th>${header}</tr></thead>
<tbody>${rows}</tbody>
</table>`;
}

function renderConsensusSection(report: ReportResponse): string {
  const count = report.consensus_accepted.length;
  const list =
    count === 0
      ? `<p class="empty">No criterion has reached consensus yet.</p>`
      : `<ul class="accepted-list">${report.consensus_accepted
          .map((id) => `<li>${escapeHtml(id)}</li>`)
          .join("")}</ul>`;
  return `<h3>Consensus</h3>
<p>Accepted with at least <span data-field="consensus_threshold" data-value="${attr(report.consensus_threshold)}">${attr(report.consensus_threshold)}</span> of <span data-field="panel_n" data-value="${attr(report.panel_n)}">${attr(report.panel_n)}</span> approvals: <span data-field="consensus_accepted_count" data-value="${attr(count)}">${attr(count)}</span> criterion(s)</p>
${list}`;
}

export function renderDashboard(report: ReportResponse): string {
  if (report.total_decisions === 0) {
    return `<section class="dashboard">
<h2>Review dashboard</h2>
<p class="empty-state">No decisions recorded yet. Agreement statistics will appear once reviewers start deciding.</p>
<dl class="stats">${statRow("Criteria in queue", "queue_size", report.queue_size, String(report.queue_size))}</dl>
</section>`;
  }
  const stats = [
    statRow("Criteria in queue", "queue_size", report.queue_size, String(report.queue_size)),
    statRow("Criteria decided", "decided_items", report.decided_items, String(report.decided_items)),
    statRow("Total decisions", "total_decisions", report.total_decisions, String(report.total_decisions)),
    statRow(
      "Overall average agreement",
      "overall_average_agreement",
      report.overall_average_agreement,
      formatPercent(report.overall_average_agreement),
    ),
    statRow(
      "Mean pairwise Cohen kappa",
      "mean_pairwise_kappa",
      report.mean_pairwise_kappa,
      formatNumber(report.mean_pairwise_kappa),
    ),
    statRow("Gwet AC1", "gwet_ac1", report.gwet_ac1, formatNumber(report.gwet_ac1)),
  ].join("");
  const pairwise =
    report.raters.length >= 2
      ? `<h3>Pairwise agreement</h3>${renderPairwiseTable(report)}`
      : "";
  return `<section class="dashboard">
<h2>Review dashboard</h2>
<dl class="stats">${stats}</dl>
<h3>Raters</h3>
${renderRaterTable(report)}
${pairwise}
${renderConsensusSection(report)}
</section>`;
}
