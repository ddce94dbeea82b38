// Typed client for the review service JSON API. Every interface mirrors the
// exact field names the server emits; the UI displays these values verbatim
// and never derives statistics of its own.

export type Verdict = "approved" | "declined";

export interface DecisionView {
  reviewer: string;
  verdict: Verdict;
  decided_at: string;
}

export interface ConsensusView {
  approvals: number;
  declines: number;
  decided: number;
  threshold_m: number;
  panel_n: number;
  accepted: boolean;
}

export interface StoryListItem {
  id: string;
  project: string;
  text: string;
  existing_criteria: string[];
  total_criteria: number;
  decided: number;
  pending: number;
}

export interface StoryListResponse {
  items: StoryListItem[];
  total: number;
  offset: number;
  limit: number;
}

export interface StoryView {
  id: string;
  project: string;
  text: string;
  existing_criteria: string[];
}

export interface CriterionView {
  id: string;
  story_id: string;
  issue_id: string;
  scenario_text: string;
  raw_text: string;
  source_issue_text: string;
  explanation: string;
  decisions: DecisionView[];
  my_decision: DecisionView | null;
  consensus: ConsensusView | null;
}

export interface StoryCriteriaResponse {
  story: StoryView;
  criteria: CriterionView[];
}

export interface DecisionResponse {
  decision: DecisionView;
  consensus: ConsensusView;
}

export interface ReportResponse {
  raters: string[];
  per_rater_approval: Record<string, number>;
  pairwise_agreement: Record<string, Record<string, number>>;
  per_rater_average_agreement: Record<string, number>;
  overall_average_agreement: number | null;
  mean_pairwise_kappa: number | null;
  gwet_ac1: number | null;
  consensus_threshold: number;
  panel_n: number;
  consensus_accepted: string[];
  queue_size: number;
  decided_items: number;
  total_decisions: number;
}

/** Error raised for non-2xx responses, carrying the server's error body. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (typeof body.code === "string") code = body.code;
    if (typeof body.message === "string") message = body.message;
  } catch {
    // non-JSON body; keep the generic message
  }
  return new ApiError(response.status, code, message);
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(base = "", fetchImpl: FetchLike = (input, init) => fetch(input, init)) {
    this.base = base.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async get<T>(path: string, params: Record<string, string> = {}): Promise<T> {
    const query = new URLSearchParams(params).toString();
    const url = `${this.base}${path}${query ? `?${query}` : ""}`;
    const response = await this.fetchImpl(url);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  async listStories(reviewer = "", offset = 0, limit = 100): Promise<StoryListResponse> {
    const params: Record<string, string> = { offset: String(offset), limit: String(limit) };
    if (reviewer) params.reviewer = reviewer;
    return this.get<StoryListResponse>("/api/stories", params);
  }

  async storyCriteria(storyId: string, reviewer = ""): Promise<StoryCriteriaResponse> {
    const params: Record<string, string> = {};
    if (reviewer) params.reviewer = reviewer;
    return this.get<StoryCriteriaResponse>(
      `/api/stories/${encodeURIComponent(storyId)}/criteria`,
      params,
    );
  }

  async postDecision(criterionId: string, reviewer: string, verdict: Verdict): Promise<DecisionResponse> {
    const url = `${this.base}/api/criteria/${encodeURIComponent(criterionId)}/decision`;
    const response = await this.fetchImpl(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ reviewer, verdict }),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as DecisionResponse;
  }

  async report(): Promise<ReportResponse> {
    return this.get<ReportResponse>("/api/report");
  }
}
