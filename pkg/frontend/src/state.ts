// Pure state transitions for the annotation screen. Everything here is
// synchronous and immutable so the unit tests can drive it without a DOM.

import { CHARACTERISTICS, ERROR_TAGS } from "./types";
import type { AnnotationBody, Characteristic, ErrorTag, Quality, QueueItem } from "./types";

export interface Draft {
  readonly quality: Quality | null;
  readonly characteristics: ReadonlySet<Characteristic>;
  readonly errorTags: ReadonlySet<ErrorTag>;
}

export function emptyDraft(): Draft {
  return { quality: null, characteristics: new Set(), errorTags: new Set() };
}

export function setQuality(draft: Draft, quality: Quality): Draft {
  return { ...draft, quality };
}

export function toggleCharacteristic(draft: Draft, item: Characteristic): Draft {
  const next = new Set(draft.characteristics);
  if (next.has(item)) {
    next.delete(item);
  } else {
    next.add(item);
  }
  return { ...draft, characteristics: next };
}

export function toggleErrorTag(draft: Draft, tag: ErrorTag): Draft {
  const next = new Set(draft.errorTags);
  if (next.has(tag)) {
    next.delete(tag);
  } else {
    next.add(tag);
  }
  return { ...draft, errorTags: next };
}

// Poor conversations need no characteristics; everything else must carry at
// least one so the seed set records why the example is worth keeping.
export function canSubmit(draft: Draft): boolean {
  if (draft.quality === null) return false;
  return draft.quality === "Poor" || draft.characteristics.size > 0;
}

export function draftBody(draft: Draft): AnnotationBody {
  if (draft.quality === null) throw new Error("draft has no quality");
  return {
    quality: draft.quality,
    characteristics: CHARACTERISTICS.filter((c) => draft.characteristics.has(c)),
    error_tags: ERROR_TAGS.filter((t) => draft.errorTags.has(t)),
  };
}

export function markAnnotated(
  items: readonly QueueItem[],
  id: string,
  quality: Quality,
): QueueItem[] {
  return items.map((item) =>
    item.conversation_id === id ? { ...item, status: "annotated", quality } : item,
  );
}

export function allAnnotated(items: readonly QueueItem[]): boolean {
  return items.length > 0 && items.every((item) => item.status === "annotated");
}

export function promoteEnabled(
  items: readonly QueueItem[],
  frozen: boolean,
  promoted: boolean,
): boolean {
  return !frozen && !promoted && allAnnotated(items);
}

export function nextPendingIndex(items: readonly QueueItem[], from: number): number {
  for (let step = 1; step <= items.length; step += 1) {
    const index = (from + step) % items.length;
    if (items[index].status === "pending") return index;
  }
  return -1;
}

export function moveSelection(length: number, current: number, delta: number): number {
  if (length === 0) return -1;
  const moved = current + delta;
  return Math.min(length - 1, Math.max(0, moved));
}
