// Keyboard shortcuts for the review queue. Pure mapping so it can be tested
// without a DOM: the caller passes the event key and (optionally) the event
// target, and shortcuts are suppressed while the user is typing in a field.

export type KeyAction = "approve" | "decline" | "next" | "prev";

export interface KeyTarget {
  tagName?: string;
  isContentEditable?: boolean;
}

const TYPING_TAGS = new Set(["INPUT", "TEXTAREA", "SELECT"]);

export function actionForKey(key: string, target: KeyTarget | null = null): KeyAction | null {
  if (target && (TYPING_TAGS.has(target.tagName ?? "") || target.isContentEditable)) {
    return null;
  }
  switch (key) {
    case "a":
    case "A":
      return "approve";
    case "d":
    case "D":
      return "decline";
    case "ArrowRight":
    case "j":
      return "next";
    case "ArrowLeft":
    case "k":
      return "prev";
    default:
      return null;
  }
}
