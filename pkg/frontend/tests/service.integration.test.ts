// Drives a real backend process end to end: build a fixture workspace,
// serve it, then annotate and promote through the same client the UI uses.
// After every optimistic local update, a fresh queue fetch must agree.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import {
  canSubmit,
  emptyDraft,
  markAnnotated,
  promoteEnabled,
  setQuality,
} from "../src/state";
import type { AnnotationBody, QueueItem } from "../src/types";

const here = dirname(fileURLToPath(import.meta.url));
const repoRoot = resolve(here, "../..");
const distDir = resolve(here, "../dist");
const port = 8700 + (process.pid % 800);
const base = `http://127.0.0.1:${port}`;

let workspace: string;
let server: ChildProcess | null = null;
let serverLog = "";

const client = new ApiClient(base);

async function waitForHealthz(): Promise<void> {
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${base}/api/healthz`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((done) => setTimeout(done, 250));
  }
  throw new Error(`service never became healthy\n${serverLog}`);
}

beforeAll(async () => {
  workspace = mkdtempSync(join(tmpdir(), "chatloom-ui-"));
  const fixture = spawnSync(
    "python3",
    [join(repoRoot, "scripts", "make_ui_fixture.py"), "--workspace", workspace],
    { cwd: repoRoot, encoding: "utf8" },
  );
  if (fixture.status !== 0) {
    throw new Error(`fixture build failed:\n${fixture.stdout}\n${fixture.stderr}`);
  }
  server = spawn(
    "python3",
    [
      "-m",
      "chatloom.cli",
      "serve",
      workspace,
      "--port",
      String(port),
      "--ui-dir",
      distDir,
    ],
    { cwd: repoRoot },
  );
  server.stdout?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  server.stderr?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  await waitForHealthz();
});

afterAll(() => {
  server?.kill();
  if (workspace) rmSync(workspace, { recursive: true, force: true });
});

// module-level so the sequential tests share the optimistic local queue
let iteration = 0;
let local: QueueItem[] = [];

async function freshItems(): Promise<QueueItem[]> {
  const snapshot = await client.queue(iteration);
  return snapshot.items;
}

describe("service integration", () => {
  it("starts with a full pending batch and a mounted UI", async () => {
    const state = await client.iterations();
    expect(state.frozen).toBe(false);
    expect(state.history.length).toBe(1);
    iteration = state.history[0].iteration;

    const queue = await client.queue(iteration);
    expect(queue.items.length).toBe(5);
    expect(queue.items.every((item) => item.status === "pending")).toBe(true);
    expect(queue.promoted).toBe(false);
    local = queue.items;
    expect(promoteEnabled(local, state.frozen, queue.promoted)).toBe(false);

    const ui = await fetch(`${base}/ui/`);
    expect(ui.status).toBe(200);
    expect(await ui.text()).toContain('<div id="app">');
  });

  it("rejects what the draft gate would never send, and the queue is unharmed", async () => {
    const target = local[0];
    const draft = setQuality(emptyDraft(), "Excellent");
    expect(canSubmit(draft)).toBe(false); // UI gate mirrors the server rule

    const before = local;
    local = markAnnotated(local, target.conversation_id, "Excellent");
    const invalid: AnnotationBody = { quality: "Excellent", characteristics: [], error_tags: [] };
    let failure: unknown;
    try {
      await client.annotate(target.conversation_id, invalid);
    } catch (error) {
      failure = error;
    }
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(422);
    expect((failure as ApiError).reason).toContain("characteristics");

    local = before; // rollback
    expect(await freshItems()).toEqual(local);
    expect(local[0].status).toBe("pending");
  });

  it("each annotation reloads to exactly the optimistic state", async () => {
    const plan: AnnotationBody[] = [
      { quality: "Excellent", characteristics: ["ImageCreation"], error_tags: [] },
      { quality: "Satisfactory", characteristics: ["ImageComparison"], error_tags: ["Incoherence"] },
      { quality: "Poor", characteristics: [], error_tags: ["Hallucination"] },
      {
        quality: "Excellent",
        characteristics: ["IntrinsicImageUnderstanding", "ExtrinsicImageUnderstanding"],
        error_tags: [],
      },
      { quality: "Satisfactory", characteristics: ["ExtrinsicImageUnderstanding"], error_tags: [] },
    ];
    for (const [index, body] of plan.entries()) {
      const id = local[index].conversation_id;
      const echo = await client.annotate(id, body, `ann-${id}`);
      expect(echo.conversation_id).toBe(id);
      expect(echo.quality).toBe(body.quality);
      local = markAnnotated(local, id, body.quality);
      expect(await freshItems()).toEqual(local);
    }
    const detail = await client.conversation(local[2].conversation_id);
    expect(detail.status).toBe("annotated");
    expect(detail.annotation?.quality).toBe("Poor");
  });

  it("promote enables once the queue is complete, then disables after", async () => {
    const state = await client.iterations();
    expect(state.pending).toEqual([]);
    expect(promoteEnabled(local, state.frozen, false)).toBe(true);

    const result = await client.promote("promote-1");
    expect(result.promoted.length).toBe(4); // everything but the Poor one
    expect(result.seedset_size).toBe(4);
    expect(result.frozen).toBe(false);

    const after = await client.iterations();
    expect(after.iteration).toBe(iteration);
    expect(after.history[0].promoted).toBe(true);
    const queue = await client.queue(iteration);
    expect(queue.promoted).toBe(true);
    expect(promoteEnabled(queue.items, after.frozen, queue.promoted)).toBe(false);

    const seedset = await client.seedset();
    expect(seedset.size).toBe(4);
    expect(seedset.frozen).toBe(false);
  });
});
