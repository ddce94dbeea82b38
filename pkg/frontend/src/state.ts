// Client-side review session: the flattened criterion queue, the cursor into
// it, and the reviewer identity. All decision state lives on the server; this
// class only caches what the API returned and applies optimistic updates that
// are reconciled (or reverted) when the POST settles.

import type {
  CriterionView,
  DecisionResponse,
  ReviewApi,
  StoryView,
  Verdict,
} from "./api.js";

export const REVIEWER_STORAGE_KEY = "cruise.reviewer";

/** Minimal slice of the Web Storage API so tests can inject a plain map. */
export interface KeyValueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export interface QueueEntry {
  storyId: string;
  criterionId: string;
}

export class ReviewSession {
  readonly entries: QueueEntry[] = [];
  position = 0;

  private reviewer: string;
  private readonly stories = new Map<string, StoryView>();
  private readonly criteria = new Map<string, CriterionView>();

  constructor(
    private readonly api: ReviewApi,
    private readonly storage: KeyValueStorage | null = null,
  ) {
    this.reviewer = storage?.getItem(REVIEWER_STORAGE_KEY) ?? "";
  }

  get reviewerName(): string {
    return this.reviewer;
  }

  setReviewer(name: string): void {
    this.reviewer = name.trim();
    this.storage?.setItem(REVIEWER_STORAGE_KEY, this.reviewer);
  }

  /** A decision may only be posted once a non-empty reviewer name is set. */
  get canDecide(): boolean {
    return this.reviewer !== "";
  }

  get length(): number {
    return this.entries.length;
  }

  /** True when the cursor sits past the last criterion (summary position). */
  get atEnd(): boolean {
    return this.position >= this.entries.length;
  }

  /** Fetches the queue: every criterion of every listed story, in API order. */
  async load(): Promise<void> {
    const listing = await this.api.listStories(this.reviewer);
    this.entries.length = 0;
    this.stories.clear();
    this.criteria.clear();
    for (const item of listing.items) {
      const page = await this.api.storyCriteria(item.id, this.reviewer);
      this.stories.set(page.story.id, page.story);
      for (const criterion of page.criteria) {
        this.criteria.set(criterion.id, criterion);
        this.entries.push({ storyId: page.story.id, criterionId: criterion.id });
      }
    }
    this.position = Math.min(this.position, this.entries.length);
  }

  current(): { story: StoryView; criterion: CriterionView } | null {
    const entry = this.entries[this.position];
    if (!entry) return null;
    const story = this.stories.get(entry.storyId);
    const criterion = this.criteria.get(entry.criterionId);
    if (!story || !criterion) return null;
    return { story, criterion };
  }

  /** Moves forward; the position one past the end shows the summary. */
  next(): void {
    this.position = Math.min(this.position + 1, this.entries.length);
  }

  prev(): void {
    this.position = Math.max(this.position - 1, 0);
  }

  decidedByMe(): { approved: number; declined: number } {
    let approved = 0;
    let declined = 0;
    for (const criterion of this.criteria.values()) {
      const mine = criterion.my_decision;
      if (!mine || mine.decided_at === "pending") continue;
      if (mine.verdict === "approved") approved += 1;
      else declined += 1;
    }
    return { approved, declined };
  }

  /**
   * Posts a verdict for the current criterion. The local card flips
   * immediately; the server response overwrites the optimistic state, and a
   * failed POST restores exactly what was shown before.
   */
  async decide(verdict: Verdict): Promise<DecisionResponse> {
    if (!this.canDecide) {
      throw new Error("set a reviewer name before deciding");
    }
    const entry = this.entries[this.position];
    if (!entry) {
      throw new Error("no criterion selected");
    }
    const criterion = this.criteria.get(entry.criterionId);
    if (!criterion) {
      throw new Error("no criterion selected");
    }
    const previousDecision = criterion.my_decision;
    const previousConsensus = criterion.consensus;
    criterion.my_decision = {
      reviewer: this.reviewer,
      verdict,
      decided_at: "pending",
    };
    try {
      const result = await this.api.postDecision(criterion.id, this.reviewer, verdict);
      criterion.my_decision = result.decision;
      criterion.consensus = result.consensus;
      return result;
    } catch (error) {
      criterion.my_decision = previousDecision;
      criterion.consensus = previousConsensus;
      throw error;
    }
  }
}
