/**
 * End-to-end loop against the real audit service on a fixture state:
 * lease a task, submit a verdict, see it in the agreement counts within one
 * refresh, and exercise the LeaseExpired path via the service's test clock.
 *
 * Requires the backend package importable as `python3 -m samhita` (pip
 * install -e .. from the repository root).
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AuditApi, LeaseExpired, NoTasksAvailable } from "../src/api.js";

const HERE = dirname(fileURLToPath(import.meta.url));

let child: ChildProcess | null = null;
let base = "";

async function advanceClock(seconds: number): Promise<void> {
  await fetch(`${base}/audit/_clock/advance`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ seconds }),
  });
}

beforeAll(async () => {
  const stateDir = mkdtempSync(join(tmpdir(), "audit-state-"));
  const tasksPath = join(stateDir, "tasks.jsonl");
  writeFileSync(tasksPath, readFileSync(join(HERE, "fixtures", "tasks.jsonl")));

  child = spawn(
    "python3",
    [
      "-m", "samhita", "audit", "serve",
      "--state", stateDir,
      "--tasks", tasksPath,
      "--port", "0",
      "--test-clock",
      "--lease-seconds", "300",
      "--required-verdicts", "1",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );

  base = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error(`service did not start: ${buffer}`)), 15000);
    child!.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/listening on (http:\/\/127\.0\.0\.1:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    child!.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
    });
    child!.on("exit", (code) => reject(new Error(`service exited early (${code}): ${buffer}`)));
  });
});

afterAll(() => {
  child?.kill();
});

describe("review loop against the live service", () => {
  it("leases, submits, and sees the verdict in agreement counts", async () => {
    const api = new AuditApi(base);
    const task = await api.fetchNextTask("practitioner-1");
    expect(task.task_id).toBe("task-i0001");
    expect(task.passage).toContain("Turmeric");
    expect(task.spans.length).toBeGreaterThan(0);

    const ack = await api.submitVerdict(task.task_id, "practitioner-1", "Grounded", "looks fine");
    expect(ack.done).toBe(true);

    const agreement = await api.fetchAgreement();
    const stratum = agreement.strata.find((s) => s.stratum_key === task.stratum_key);
    expect(stratum).toBeDefined();
    expect(stratum!.label_counts.Grounded).toBe(1);
  });

  it("serves the Devanagari task intact (byte-for-byte payload)", async () => {
    const api = new AuditApi(base);
    const task = await api.fetchNextTask("practitioner-1");
    expect(task.task_id).toBe("task-i0002");
    expect(task.passage.startsWith("पञ्चकर्म की पाँच क्रियाएँ")).toBe(true);
    const [s, e] = task.spans[0]!;
    expect(task.passage.slice(s, e)).toBe(task.answer);
    // leave it leased; the next test expires this lease
  });

  it("rejects a submission after the lease expires (clock manipulation)", async () => {
    const api = new AuditApi(base);
    await advanceClock(1000); // lease was 300 s
    await expect(
      api.submitVerdict("task-i0002", "practitioner-1", "Grounded"),
    ).rejects.toBeInstanceOf(LeaseExpired);
  });

  it("relets the expired task to another annotator", async () => {
    const api = new AuditApi(base);
    const task = await api.fetchNextTask("practitioner-2");
    expect(task.task_id).toBe("task-i0002");
    const ack = await api.submitVerdict(task.task_id, "practitioner-2", "OverGeneralization");
    expect(ack.done).toBe(true);
  });

  it("drains the queue down to NoTasksAvailable", async () => {
    const api = new AuditApi(base);
    const task = await api.fetchNextTask("practitioner-3");
    expect(task.task_id).toBe("task-i0003");
    await api.submitVerdict(task.task_id, "practitioner-3", "Unsafe");
    await expect(api.fetchNextTask("practitioner-3")).rejects.toBeInstanceOf(NoTasksAvailable);
  });

  it("reports strata summaries over the fixture state", async () => {
    const api = new AuditApi(base);
    const summary = await api.fetchStrata();
    expect(summary.strata["escalate|low|standard"]!.tasks).toBe(2);
    expect(summary.strata["accept|high|high"]!.tasks).toBe(1);
  });
});
