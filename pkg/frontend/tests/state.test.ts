import { describe, expect, it } from "vitest";

import { ApiError, ReviewApi } from "../src/api.js";
import type {
  CriterionView,
  FetchLike,
  StoryCriteriaResponse,
  StoryListResponse,
} from "../src/api.js";
import { REVIEWER_STORAGE_KEY, ReviewSession } from "../src/state.js";
import type { KeyValueStorage } from "../src/state.js";

function memoryStorage(): KeyValueStorage & { data: Map<string, string> } {
  const data = new Map<string, string>();
  return {
    data,
    getItem: (key) => data.get(key) ?? null,
    setItem: (key, value) => void data.set(key, value),
  };
}

function makeCriterion(id: string, storyId: string): CriterionView {
  return {
    id,
    story_id: storyId,
    issue_id: `fix/${id}`,
    scenario_text: `Scenario: ${id}\nGIVEN a\nWHEN b\nTHEN c`,
    raw_text: `Scenario: ${id}\nGIVEN a\nWHEN b\nTHEN c`,
    source_issue_text: `issue for ${id}`,
    explanation: `insight for ${id}`,
    decisions: [],
    my_decision: null,
    consensus: null,
  };
}

interface FakeServer {
  api: ReviewApi;
  requests: URL[];
  posted: { criterionId: string; reviewer: string; verdict: string }[];
  failNextDecision(status: number, code: string, message: string): void;
  holdNextDecision(): { release(): void };
}

/**
 * In-memory stand-in for the review service: two stories, three criteria,
 * successful decisions echoing a fixed timestamp. Individual tests can make
 * the next POST fail or stall.
 */
function fakeServer(): FakeServer {
  const stories: StoryListResponse = {
    items: [
      {
        id: "S1",
        project: "p",
        text: "As a user, I want one.",
        existing_criteria: [],
        total_criteria: 2,
        decided: 0,
        pending: 2,
      },
      {
        id: "S2",
        project: "p",
        text: "As a user, I want two.",
        existing_criteria: [],
        total_criteria: 1,
        decided: 0,
        pending: 1,
      },
    ],
    total: 2,
    offset: 0,
    limit: 100,
  };
  const pages: Record<string, StoryCriteriaResponse> = {
    S1: {
      story: { id: "S1", project: "p", text: "As a user, I want one.", existing_criteria: [] },
      criteria: [makeCriterion("c1", "S1"), makeCriterion("c2", "S1")],
    },
    S2: {
      story: { id: "S2", project: "p", text: "As a user, I want two.", existing_criteria: [] },
      criteria: [makeCriterion("c3", "S2")],
    },
  };

  const requests: URL[] = [];
  const posted: FakeServer["posted"] = [];
  let failure: { status: number; code: string; message: string } | null = null;
  let gate: Promise<void> | null = null;

  const json = (body: unknown, status = 200) =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const fetchImpl: FetchLike = async (input, init) => {
    const url = new URL(input, "http://fake.local");
    requests.push(url);
    if (url.pathname === "/api/stories") return json(stories);
    const page = url.pathname.match(/^\/api\/stories\/([^/]+)\/criteria$/);
    if (page) return json(pages[decodeURIComponent(page[1])]);
    const decision = url.pathname.match(/^\/api\/criteria\/([^/]+)\/decision$/);
    if (decision && init?.method === "POST") {
      if (gate) {
        await gate;
        gate = null;
      }
      if (failure) {
        const body = { code: failure.code, message: failure.message };
        const status = failure.status;
        failure = null;
        return json(body, status);
      }
      const payload = JSON.parse(String(init.body)) as { reviewer: string; verdict: string };
      posted.push({ criterionId: decodeURIComponent(decision[1]), ...payload });
      return json({
        decision: {
          reviewer: payload.reviewer,
          verdict: payload.verdict,
          decided_at: "2024-06-05T12:00:00Z",
        },
        consensus: {
          approvals: payload.verdict === "approved" ? 1 : 0,
          declines: payload.verdict === "declined" ? 1 : 0,
          decided: 1,
          threshold_m: 3,
          panel_n: 4,
          accepted: false,
        },
      });
    }
    return json({ code: "not_found", message: `no route for ${url.pathname}` }, 404);
  };

  let release: (() => void) | null = null;
  return {
    api: new ReviewApi("", fetchImpl),
    requests,
    posted,
    failNextDecision(status, code, message) {
      failure = { status, code, message };
    },
    holdNextDecision() {
      gate = new Promise<void>((resolve) => {
        release = resolve;
      });
      return { release: () => release?.() };
    },
  };
}

describe("ReviewSession queue", () => {
  it("flattens every story's criteria into one queue, in API order", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    await session.load();
    expect(session.length).toBe(3);
    expect(session.entries.map((entry) => entry.criterionId)).toEqual(["c1", "c2", "c3"]);
    expect(session.current()?.story.id).toBe("S1");
    expect(session.current()?.criterion.id).toBe("c1");
  });

  it("passes the reviewer name to both list and criteria requests", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    session.setReviewer("alice");
    await session.load();
    const reviewerParams = server.requests.map((url) => url.searchParams.get("reviewer"));
    expect(reviewerParams).toEqual(["alice", "alice", "alice"]);
  });

  it("keeps the cursor inside the queue plus the trailing summary slot", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    await session.load();
    session.prev();
    expect(session.position).toBe(0);
    session.next();
    session.next();
    expect(session.current()?.criterion.id).toBe("c3");
    session.next();
    expect(session.atEnd).toBe(true);
    expect(session.current()).toBeNull();
    session.next();
    expect(session.position).toBe(3);
    session.prev();
    expect(session.current()?.criterion.id).toBe("c3");
  });

  it("clamps a stale cursor when a reload shrinks the queue", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    await session.load();
    session.position = 7;
    await session.load();
    expect(session.position).toBe(3);
    expect(session.atEnd).toBe(true);
  });
});

describe("reviewer identity", () => {
  it("persists the trimmed name and restores it for the next session", () => {
    const storage = memoryStorage();
    const first = new ReviewSession(fakeServer().api, storage);
    expect(first.canDecide).toBe(false);
    first.setReviewer("  alice  ");
    expect(first.reviewerName).toBe("alice");
    expect(storage.data.get(REVIEWER_STORAGE_KEY)).toBe("alice");

    const second = new ReviewSession(fakeServer().api, storage);
    expect(second.reviewerName).toBe("alice");
    expect(second.canDecide).toBe(true);
  });

  it("refuses to decide before a reviewer name is set", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    await session.load();
    await expect(session.decide("approved")).rejects.toThrow(
      "set a reviewer name before deciding",
    );
    expect(server.posted).toEqual([]);
    expect(session.current()?.criterion.my_decision).toBeNull();
  });
});

describe("deciding", () => {
  it("posts the verdict for the current criterion and stores the server reply", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    session.setReviewer("alice");
    await session.load();
    const result = await session.decide("approved");
    expect(server.posted).toEqual([
      { criterionId: "c1", reviewer: "alice", verdict: "approved" },
    ]);
    const criterion = session.current()!.criterion;
    expect(criterion.my_decision).toEqual(result.decision);
    expect(criterion.my_decision?.decided_at).toBe("2024-06-05T12:00:00Z");
    expect(criterion.consensus).toEqual(result.consensus);
  });

  it("applies the verdict optimistically, then reconciles with the response", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    session.setReviewer("alice");
    await session.load();
    const hold = server.holdNextDecision();
    const pending = session.decide("declined");
    const optimistic = session.current()!.criterion.my_decision;
    expect(optimistic).toEqual({
      reviewer: "alice",
      verdict: "declined",
      decided_at: "pending",
    });
    hold.release();
    await pending;
    expect(session.current()!.criterion.my_decision?.decided_at).toBe(
      "2024-06-05T12:00:00Z",
    );
  });

  it("reverts the optimistic state when the POST fails", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    session.setReviewer("alice");
    await session.load();
    const before = await session.decide("approved");

    server.failNextDecision(409, "conflict", "decision rejected");
    await expect(session.decide("declined")).rejects.toMatchObject({
      name: "ApiError",
      status: 409,
      code: "conflict",
      message: "decision rejected",
    });
    const criterion = session.current()!.criterion;
    expect(criterion.my_decision).toEqual(before.decision);
    expect(criterion.consensus).toEqual(before.consensus);
  });

  it("raises the typed error for non-JSON failures too", async () => {
    const api = new ReviewApi("", async () => new Response("boom", { status: 502 }));
    await expect(api.report()).rejects.toBeInstanceOf(ApiError);
    await expect(api.report()).rejects.toMatchObject({
      status: 502,
      code: "http_error",
    });
  });

  it("counts my decisions for the end-of-queue summary", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    session.setReviewer("alice");
    await session.load();
    await session.decide("approved");
    session.next();
    await session.decide("declined");
    expect(session.decidedByMe()).toEqual({ approved: 1, declined: 1 });
  });

  it("refuses to decide on the summary slot", async () => {
    const server = fakeServer();
    const session = new ReviewSession(server.api);
    session.setReviewer("alice");
    await session.load();
    session.next();
    session.next();
    session.next();
    await expect(session.decide("approved")).rejects.toThrow("no criterion selected");
    expect(server.posted).toEqual([]);
  });
});
