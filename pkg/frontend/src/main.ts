// Browser entry point: wires the session, renderers, and keyboard shortcuts
// to the DOM. Everything testable lives in the imported modules; this file
// only moves strings into elements and events into method calls.

import { ApiError, ReviewApi } from "./api.js";
import { actionForKey } from "./keyboard.js";
import { renderCriterionCard, renderDashboard, renderSummary } from "./render.js";
import { ReviewSession } from "./state.js";

const api = new ReviewApi("");
const session = new ReviewSession(api, window.localStorage);

const app = document.getElementById("app") as HTMLElement;
const errorBanner = document.getElementById("error") as HTMLElement;
const reviewerInput = document.getElementById("reviewer") as HTMLInputElement;
const navButtons = Array.from(
  document.querySelectorAll<HTMLButtonElement>("[data-view]"),
);

let view: "queue" | "dashboard" = "queue";

function showError(message: string): void {
  errorBanner.textContent = message;
  errorBanner.hidden = false;
}

function clearError(): void {
  errorBanner.hidden = true;
}

async function renderView(): Promise<void> {
  for (const button of navButtons) {
    button.classList.toggle("active", button.dataset.view === view);
  }
  if (view === "dashboard") {
    const report = await api.report();
    app.innerHTML = renderDashboard(report);
    return;
  }
  if (session.length === 0) {
    app.innerHTML = `<p class="empty-state">The review queue is empty.</p>`;
    return;
  }
  const current = session.current();
  if (!current) {
    const counts = session.decidedByMe();
    app.innerHTML = renderSummary(session.length, counts.approved, counts.declined);
    return;
  }
  app.innerHTML = renderCriterionCard(
    current.story,
    current.criterion,
    session.position + 1,
    session.length,
  );
}

async function refresh(): Promise<void> {
  try {
    await renderView();
  } catch (error) {
    showError(error instanceof Error ? error.message : String(error));
  }
}

async function decide(verdict: "approved" | "declined"): Promise<void> {
  if (!session.canDecide) {
    showError("Enter your reviewer name before deciding.");
    reviewerInput.focus();
    return;
  }
  try {
    await session.decide(verdict);
    clearError();
  } catch (error) {
    if (error instanceof ApiError) {
      showError(`Decision not saved: ${error.message}`);
    } else {
      showError("Decision not saved: the server could not be reached.");
    }
  }
  await refresh();
}

async function handleAction(action: "approve" | "decline" | "next" | "prev"): Promise<void> {
  switch (action) {
    case "approve":
      await decide("approved");
      break;
    case "decline":
      await decide("declined");
      break;
    case "next":
      session.next();
      await refresh();
      break;
    case "prev":
      session.prev();
      await refresh();
      break;
  }
}

document.addEventListener("keydown", (event) => {
  if (view !== "queue" || event.ctrlKey || event.metaKey || event.altKey) return;
  const action = actionForKey(event.key, event.target as HTMLElement | null);
  if (!action) return;
  event.preventDefault();
  void handleAction(action);
});

app.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action;
  if (action === "approve" || action === "decline") {
    void handleAction(action);
  }
});

for (const button of navButtons) {
  button.addEventListener("click", () => {
    view = button.dataset.view === "dashboard" ? "dashboard" : "queue";
    void refresh();
  });
}

reviewerInput.value = session.reviewerName;
reviewerInput.addEventListener("change", () => {
  session.setReviewer(reviewerInput.value);
  clearError();
  void session.load().then(refresh);
});

void session
  .load()
  .then(refresh)
  .catch((error: unknown) => {
    showError(
      error instanceof Error
        ? `Could not load the review queue: ${error.message}`
        : "Could not load the review queue.",
    );
  });
