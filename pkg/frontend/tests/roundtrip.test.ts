/**
 * Live-service round trip: spawns the Python service over demo artifacts
 * (corpus + trained tiny checkpoint + index) and drives the real UI logic
 * against it. Gated on MANUALQA_DEMO_DIR; build the artifacts with
 * `python3 scripts/make_demo.py --out frontend/.demo` from the repo root.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { mountApp } from "../src/app";
import { renderScale } from "../src/geometry";
import { flushTasks, installSkeleton } from "./dom";

const DEMO_DIR = process.env.MANUALQA_DEMO_DIR;
const PORT = Number(process.env.MANUALQA_DEMO_PORT ?? 8731);
const BASE = `http://127.0.0.1:${PORT}`;

interface Expected {
  manual_id: string;
  question: string;
  answer_text: string;
  region_ids: string[];
  boxes: Record<string, [number, number, number, number]>;
  page_index: number;
  page_width: number;
}

const maybe = DEMO_DIR ? describe : describe.skip;

maybe("live service round trip", () => {
  let service: ChildProcess;
  let expected: Expected;

  beforeAll(async () => {
    expected = JSON.parse(readFileSync(join(DEMO_DIR!, "expected.json"), "utf-8"));
    service = spawn(
      "python3",
      [
        "-m", "manualqa.cli", "serve",
        "--corpus", join(DEMO_DIR!, "corpus"),
        "--checkpoint", join(DEMO_DIR!, "ckpt", "best.ckpt"),
        "--index", join(DEMO_DIR!, "pages.idx"),
        "--port", String(PORT),
      ],
      { stdio: "inherit" },
    );
    const deadline = Date.now() + 90_000;
    for (;;) {
      try {
        const response = await fetch(`${BASE}/healthz`);
        if (response.ok) break;
      } catch {
        /* not up yet */
      }
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((resolve) => setTimeout(resolve, 500));
    }
  });

  afterAll(() => {
    service?.kill("SIGTERM");
  });

  it("asking a memorized question renders the gold answer and regions", async () => {
    installSkeleton();
    const app = mountApp(document, BASE);
    await flushTasks();
    await new Promise((resolve) => setTimeout(resolve, 200));
    const cards = document.querySelectorAll<HTMLElement>(".manual-card");
    expect(cards.length).toBeGreaterThan(0);
    const card = Array.from(cards).find(
      (c) => c.dataset.manualId === expected.manual_id,
    )!;
    expect(card).toBeDefined();
    card.click();
    await new Promise((resolve) => setTimeout(resolve, 300));

    await app.ask(expected.question);
    await flushTasks();

    expect(document.querySelector(".answer-text")!.textContent).toBe(expected.answer_text);
    const overlays = Array.from(document.querySelectorAll<HTMLElement>(".overlay"));
    const shown = overlays.map((o) => o.dataset.regionId).sort();
    expect(shown).toEqual([...expected.region_ids].sort());
  });

  it.each([0.5, 1.25])(
    "overlay geometry matches API boxes within 1px at zoom %s",
    async (zoom) => {
      installSkeleton();
      const app = mountApp(document, BASE);
      await new Promise((resolve) => setTimeout(resolve, 300));
      const cards = Array.from(document.querySelectorAll<HTMLElement>(".manual-card"));
      cards.find((c) => c.dataset.manualId === expected.manual_id)!.click();
      await new Promise((resolve) => setTimeout(resolve, 300));
      (document.getElementById("zoom-select") as HTMLSelectElement).value = String(zoom);
      await app.ask(expected.question);
      await flushTasks();
      const scale = renderScale(expected.page_width, expected.page_width * zoom);
      for (const overlay of document.querySelectorAll<HTMLElement>(".overlay")) {
        const box = expected.boxes[overlay.dataset.regionId!];
        expect(box).toBeDefined();
        expect(Math.abs(parseFloat(overlay.style.left) - box[0] * scale)).toBeLessThanOrEqual(1);
        expect(Math.abs(parseFloat(overlay.style.top) - box[1] * scale)).toBeLessThanOrEqual(1);
        expect(
          Math.abs(parseFloat(overlay.style.width) - (box[2] - box[0]) * scale),
        ).toBeLessThanOrEqual(1);
        expect(
          Math.abs(parseFloat(overlay.style.height) - (box[3] - box[1]) * scale),
        ).toBeLessThanOrEqual(1);
      }
    },
  );
});
