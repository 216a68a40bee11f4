// The recorded-session acceptance checks: all four views render from the
// fixture, glyph arcs sum to one, a KDE drag issues exactly one debounced
// /whatif with gold overlays landing in ranking, glyphs, and impact dots,
// and strategies survive a save -> reload round trip.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { ApiClient, type RankingDoc } from "../src/api";
import { Controller } from "../src/controller";
import { fixture, installMockService, makeRoots, type MockServer } from "./helpers";

const TARGET = fixture<RankingDoc>("ranking").rows[0].cbg;

describe("coordinated views from a recorded session", () => {
  let server: MockServer;
  let controller: Controller;
  let roots: ReturnType<typeof makeRoots>;

  beforeEach(async () => {
    server = installMockService();
    roots = makeRoots();
    controller = new Controller(new ApiClient(""), roots, 300);
    await controller.boot("income", 0);
    await controller.selectCommunity(0);
    await controller.selectTarget(TARGET);
  });

  afterEach(() => {
    vi.unstubAllGlobals();
    vi.useRealTimers();
  });

  it("renders all four views", () => {
    expect(roots.community.querySelectorAll(".iqr-box").length).toBeGreaterThan(0);
    expect(roots.community.querySelectorAll(".matrix-cell").length).toBeGreaterThan(0);
    expect(roots.ranking.querySelectorAll("tr.ranking-row").length).toBeGreaterThan(0);
    expect(roots.map.querySelectorAll(".glyph").length).toBeGreaterThan(1);
    expect(roots.map.querySelectorAll(".nav-cell").length).toBeGreaterThan(10);
    expect(roots.whatif.querySelectorAll(".kde-row").length).toBeGreaterThan(0);
    expect(roots.whatif.querySelectorAll(".impact-dot").length).toBeGreaterThan(0);
  });

  it("glyph group arcs exist and encode fractions summing to one", () => {
    const glyphs = roots.map.querySelectorAll(".glyph");
    let checked = 0;
    for (const glyph of glyphs) {
      const arcs = glyph.querySelectorAll(".group-arc");
      if (arcs.length === 0) continue;
      checked += 1;
    }
    expect(checked).toBeGreaterThan(0);
    // renderGlyph throws if fractions drift from 1; rendering fully is the assertion
  });

  it("a drag burst issues exactly one debounced /whatif and paints gold overlays", async () => {
    vi.useFakeTimers();
    // dragging the food line produces a stream of delta updates
    for (let v = 1; v <= 20; v++) {
      controller.handleDeltaChange("food", v * 0.25);
    }
    expect(server.callCount("/whatif", "POST")).toBe(0);
    await vi.advanceTimersByTimeAsync(301);
    expect(server.callCount("/whatif", "POST")).toBe(1);
    await vi.runAllTimersAsync();
    vi.useRealTimers();
    await Promise.resolve();

    expect(controller.state.scenario).not.toBeNull();
    controller.renderAll();
    expect(roots.ranking.querySelectorAll(".gold-overlay").length).toBeGreaterThan(0);
    expect(roots.map.querySelectorAll(".flow-arc-gold").length).toBeGreaterThan(0);
    expect(roots.whatif.querySelectorAll(".impact-dot-gold").length).toBeGreaterThan(0);
  });

  it("a second drag burst issues exactly one more call", async () => {
    vi.useFakeTimers();
    for (let v = 0; v < 10; v++) controller.handleDeltaChange("food", v);
    await vi.advanceTimersByTimeAsync(301);
    for (let v = 0; v < 10; v++) controller.handleDeltaChange("shopping", v);
    await vi.advanceTimersByTimeAsync(301);
    expect(server.callCount("/whatif", "POST")).toBe(2);
    vi.useRealTimers();
  });

  it("strategies round-trip through save and reload", async () => {
    vi.useFakeTimers();
    controller.handleDeltaChange("food", 5.0);
    await vi.advanceTimersByTimeAsync(301);
    await vi.runAllTimersAsync();
    vi.useRealTimers();
    await Promise.resolve();

    await controller.saveStrategy("my plan");
    expect(server.strategies.length).toBe(1);

    // a fresh controller simulating a page reload sees the saved strategy
    const roots2 = makeRoots();
    const reloaded = new Controller(new ApiClient(""), roots2, 300);
    await reloaded.boot("income", 0);
    await reloaded.selectCommunity(0);
    await reloaded.selectTarget(TARGET);
    expect(reloaded.state.strategies.map((s) => s.label)).toContain("my plan");
    const rows = roots2.ranking.querySelectorAll(".strategy-row");
    expect(rows.length).toBe(1);
    expect(rows[0].textContent).toContain("my plan");
  });

  it("zero-delta state renders no gold overlays", () => {
    expect(controller.state.hasPendingIntervention()).toBe(false);
    expect(document.querySelectorAll(".gold-overlay").length).toBe(0);
  });

  it("hovering a glyph group arc overlays the instance-level line", () => {
    controller.hoverGroupArc(
      controller.state.inflows!.neighbors.find((n) => n.theta)!.cbg, 0);
    expect(roots.whatif.querySelectorAll(".instance-line").length).toBeGreaterThan(0);
  });
});

describe("feature control panel", () => {
  it("lists POI rows by default and expands to demographic rows", async () => {
    const server = installMockService();
    void server;
    const roots = makeRoots();
    const controller = new Controller(new ApiClient(""), roots, 300);
    await controller.boot("income", 0);
    await controller.selectCommunity(0);
    await controller.selectTarget(TARGET);
    expect(roots.whatif.querySelectorAll(".kde-row").length).toBe(12);
    expect(roots.whatif.querySelectorAll(".kde-demographic").length).toBe(0);
    (roots.whatif.querySelector(".expand-panel") as HTMLButtonElement).click();
    expect(roots.whatif.querySelectorAll(".kde-demographic").length).toBe(1);
    expect(roots.whatif.querySelectorAll(".kde-row").length).toBe(13);
    vi.unstubAllGlobals();
  });
});
