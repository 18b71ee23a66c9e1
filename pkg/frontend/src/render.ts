// DOM construction. Builders only read their inputs; click handlers are
// injected so the module stays testable in isolation.

import { CHARACTERISTICS, ERROR_TAGS, QUALITIES } from "./types";
import type {
  Characteristic,
  ConversationDict,
  ErrorTag,
  Quality,
  QueueItem,
  SegmentDict,
} from "./types";
import type { Draft } from "./state";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const STATUS_MARKERS: Record<QueueItem["status"], string> = {
  generating: "…",
  pending: "○",
  annotated: "●",
};

export function renderQueue(
  items: readonly QueueItem[],
  selected: number,
  onSelect: (index: number) => void,
): HTMLElement {
  const list = el("ul", "queue");
  items.forEach((item, index) => {
    const row = el("li", index === selected ? "queue-row selected" : "queue-row");
    row.append(
      el("span", `marker status-${item.status}`, STATUS_MARKERS[item.status]),
      el("span", "cid", item.conversation_id),
      el("span", "quality", item.quality ?? ""),
    );
    row.addEventListener("click", () => onSelect(index));
    list.append(row);
  });
  return list;
}

function renderSegment(segment: SegmentDict, captions: Record<string, string>): HTMLElement {
  if (segment.type === "text") {
    return el("span", "seg-text", segment.content);
  }
  const caption = captions[String(segment.index)];
  const label = caption
    ? `[img ${segment.index}: ${segment.description} | ${caption}]`
    : `[img ${segment.index}: ${segment.description}]`;
  return el("span", "seg-image", label);
}

export function renderConversation(conversation: ConversationDict): HTMLElement {
  const captions: Record<string, string> = {};
  for (const [key, entry] of Object.entries(conversation.roster)) {
    captions[key] = entry.caption;
  }
  const root = el("div", "conversation");
  root.append(el("h2", "conv-id", conversation.conversation_id));
  conversation.turns.forEach((turn, index) => {
    const block = el("div", "turn");
    block.append(el("h3", undefined, `Turn ${index + 1}`));
    const instruction = el("p", "instruction");
    for (const segment of turn.instruction) instruction.append(renderSegment(segment, captions));
    const response = el("p", "response");
    for (const segment of turn.response) response.append(renderSegment(segment, captions));
    block.append(instruction, response);
    root.append(block);
  });
  return root;
}

export interface DraftHandlers {
  onQuality: (quality: Quality) => void;
  onCharacteristic: (characteristic: Characteristic) => void;
  onErrorTag: (tag: ErrorTag) => void;
  onSubmit: () => void;
}

export function renderDraftPanel(
  draft: Draft,
  submittable: boolean,
  handlers: DraftHandlers,
): HTMLElement {
  const panel = el("div", "draft-panel");

  const qualityRow = el("div", "row qualities");
  QUALITIES.forEach((quality, index) => {
    const button = el(
      "button",
      draft.quality === quality ? "choice active" : "choice",
      `${index + 1} ${quality}`,
    );
    button.addEventListener("click", () => handlers.onQuality(quality));
    qualityRow.append(button);
  });

  const charRow = el("div", "row characteristics");
  CHARACTERISTICS.forEach((characteristic, index) => {
    const key = String.fromCharCode(97 + index);
    const button = el(
      "button",
      draft.characteristics.has(characteristic) ? "choice active" : "choice",
      `${key} ${characteristic}`,
    );
    button.addEventListener("click", () => handlers.onCharacteristic(characteristic));
    charRow.append(button);
  });

  const tagRow = el("div", "row error-tags");
  for (const tag of ERROR_TAGS) {
    const button = el("button", draft.errorTags.has(tag) ? "choice active" : "choice", tag);
    button.addEventListener("click", () => handlers.onErrorTag(tag));
    tagRow.append(button);
  }

  const submit = el("button", "submit", "Submit (Enter)");
  submit.disabled = !submittable;
  submit.addEventListener("click", handlers.onSubmit);

  panel.append(qualityRow, charRow, tagRow, submit);
  return panel;
}

export function renderBanner(text: string, tone: "info" | "error" | "frozen"): HTMLElement {
  return el("div", `banner ${tone}`, text);
}

export function renderPromote(enabled: boolean, onPromote: () => void): HTMLElement {
  const button = el("button", "promote", "Promote batch");
  button.disabled = !enabled;
  button.addEventListener("click", onPromote);
  return button;
}

export function renderStartIteration(enabled: boolean, onStart: () => void): HTMLElement {
  const button = el("button", "start-iteration", "Start iteration");
  button.disabled = !enabled;
  button.addEventListener("click", onStart);
  return button;
}
