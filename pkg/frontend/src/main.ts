// App shell: wires the API client, pure state, and renderers together.

import { ApiClient, ApiError } from "./api";
import { actionForKey } from "./keyboard";
import {
  allAnnotated,
  canSubmit,
  draftBody,
  emptyDraft,
  markAnnotated,
  moveSelection,
  nextPendingIndex,
  promoteEnabled,
  setQuality,
  toggleCharacteristic,
  toggleErrorTag,
  type Draft,
} from "./state";
import {
  renderBanner,
  renderConversation,
  renderDraftPanel,
  renderPromote,
  renderQueue,
  renderStartIteration,
} from "./render";
import type { ConversationDetail, IterationsState, QueueItem } from "./types";

interface AppState {
  iterations: IterationsState | null;
  queueIteration: number;
  items: QueueItem[];
  promoted: boolean;
  selected: number;
  detail: ConversationDetail | null;
  draft: Draft;
  notice: { text: string; tone: "info" | "error" } | null;
}

const client = new ApiClient();

const state: AppState = {
  iterations: null,
  queueIteration: 0,
  items: [],
  promoted: false,
  selected: -1,
  detail: null,
  draft: emptyDraft(),
  notice: null,
};

function requestKey(): string {
  return globalThis.crypto?.randomUUID?.() ?? `${Date.now()}-${Math.random()}`;
}

async function loadDetail(): Promise<void> {
  const item = state.items[state.selected];
  state.detail = item ? await client.conversation(item.conversation_id) : null;
}

async function refresh(): Promise<void> {
  state.iterations = await client.iterations();
  const latest = state.iterations.history.at(-1);
  if (!latest) {
    state.items = [];
    state.promoted = false;
    state.selected = -1;
    state.detail = null;
    render();
    return;
  }
  const queue = await client.queue(latest.iteration);
  state.queueIteration = queue.iteration;
  state.items = queue.items;
  state.promoted = queue.promoted;
  if (state.selected < 0 || state.selected >= state.items.length) {
    const firstPending = nextPendingIndex(state.items, -1);
    state.selected = firstPending >= 0 ? firstPending : state.items.length > 0 ? 0 : -1;
  }
  await loadDetail();
  render();
}

async function select(index: number): Promise<void> {
  state.selected = index;
  state.draft = emptyDraft();
  await loadDetail();
  render();
}

async function submit(): Promise<void> {
  const item = state.items[state.selected];
  if (!item || !canSubmit(state.draft)) return;
  const body = draftBody(state.draft);
  const before = state.items;
  state.items = markAnnotated(state.items, item.conversation_id, body.quality);
  render();
  try {
    await client.annotate(item.conversation_id, body, requestKey());
  } catch (error) {
    state.items = before;
    state.notice = {
      text: error instanceof ApiError ? error.reason : String(error),
      tone: "error",
    };
    render();
    return;
  }
  state.notice = null;
  state.draft = emptyDraft();
  const next = nextPendingIndex(state.items, state.selected);
  if (next >= 0) {
    await select(next);
  } else {
    await refresh();
  }
}

async function promote(): Promise<void> {
  try {
    const result = await client.promote(requestKey());
    state.notice = { text: `Promoted ${result.promoted.length} to seed set`, tone: "info" };
  } catch (error) {
    state.notice = {
      text: error instanceof ApiError ? error.reason : String(error),
      tone: "error",
    };
  }
  await refresh();
}

async function startIteration(): Promise<void> {
  try {
    const result = await client.startIteration(undefined, requestKey());
    state.notice = { text: `Queued ${result.queued} for iteration ${result.iteration}`, tone: "info" };
    state.selected = -1;
  } catch (error) {
    state.notice = {
      text: error instanceof ApiError ? error.reason : String(error),
      tone: "error",
    };
  }
  await refresh();
}

function handleKey(event: KeyboardEvent): void {
  const target = event.target as HTMLElement | null;
  if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
  const action = actionForKey(event.key);
  if (!action) return;
  event.preventDefault();
  switch (action.kind) {
    case "set-quality":
      state.draft = setQuality(state.draft, action.quality);
      render();
      break;
    case "toggle-characteristic":
      state.draft = toggleCharacteristic(state.draft, action.characteristic);
      render();
      break;
    case "submit":
      void submit();
      break;
    case "move": {
      const index = moveSelection(state.items.length, state.selected, action.delta);
      if (index >= 0 && index !== state.selected) void select(index);
      break;
    }
  }
}

function render(): void {
  const mount = document.getElementById("app");
  if (!mount) return;
  mount.replaceChildren();

  const frozen = state.iterations?.frozen ?? false;
  if (frozen) {
    mount.append(renderBanner("Seed set frozen; annotations are read-only.", "frozen"));
  }
  if (state.notice) {
    mount.append(renderBanner(state.notice.text, state.notice.tone));
  }

  const header = document.createElement("div");
  header.className = "header";
  const iteration = state.iterations?.iteration ?? 0;
  const label = document.createElement("span");
  label.textContent = `Completed iterations: ${iteration} / ${state.iterations?.freeze_after ?? "?"}`;
  header.append(label);
  header.append(
    renderStartIteration(!frozen && (state.items.length === 0 || state.promoted), () => {
      void startIteration();
    }),
  );
  header.append(
    renderPromote(promoteEnabled(state.items, frozen, state.promoted), () => {
      void promote();
    }),
  );
  mount.append(header);

  const columns = document.createElement("div");
  columns.className = "columns";
  columns.append(
    renderQueue(state.items, state.selected, (index) => {
      void select(index);
    }),
  );

  const detailPane = document.createElement("div");
  detailPane.className = "detail";
  if (state.detail) {
    detailPane.append(renderConversation(state.detail.conversation));
    if (state.detail.status === "pending" && !frozen) {
      detailPane.append(
        renderDraftPanel(state.draft, canSubmit(state.draft), {
          onQuality: (quality) => {
            state.draft = setQuality(state.draft, quality);
            render();
          },
          onCharacteristic: (characteristic) => {
            state.draft = toggleCharacteristic(state.draft, characteristic);
            render();
          },
          onErrorTag: (tag) => {
            state.draft = toggleErrorTag(state.draft, tag);
            render();
          },
          onSubmit: () => {
            void submit();
          },
        }),
      );
    } else if (state.detail.annotation) {
      const done = document.createElement("p");
      done.className = "annotated-as";
      done.textContent = `Annotated: ${state.detail.annotation.quality}`;
      detailPane.append(done);
    }
  } else if (allAnnotated(state.items) && state.promoted) {
    detailPane.append(renderBanner("Batch promoted. Start the next iteration.", "info"));
  }
  columns.append(detailPane);
  mount.append(columns);
}

document.addEventListener("keydown", handleKey);
void refresh();
