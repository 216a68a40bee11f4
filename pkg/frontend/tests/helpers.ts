// Shared test scaffolding: fixture loading and a fetch mock that replays the
// recorded service session.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { vi } from "vitest";
import type { StrategyDoc } from "../src/api";

const FIXTURE_DIR = join(dirname(fileURLToPath(import.meta.url)), "fixture");

export function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURE_DIR, `${name}.json`), "utf-8")) as T;
}

export interface MockServer {
  calls: { method: string; path: string; body?: unknown }[];
  strategies: StrategyDoc[];
  callCount(pathPrefix: string, method?: string): number;
}

/** Install a fetch mock that answers from the recorded fixture session. */
export function installMockService(): MockServer {
  const server: MockServer = {
    calls: [],
    strategies: [],
    callCount(prefix, method) {
      return this.calls.filter(
        (c) => c.path.startsWith(prefix) && (!method || c.method === method)).length;
    },
  };

  const respond = (doc: unknown) =>
    Promise.resolve(new Response(JSON.stringify(doc), {
      status: 200, headers: { "Content-Type": "application/json" },
    }));

  vi.stubGlobal("fetch", vi.fn((url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    server.calls.push({ method, path, body });

    if (path.startsWith("/communities/detect")) return respond(fixture("partition"));
    if (path.startsWith("/flow-matrix")) return respond(fixture("matrix"));
    if (path.startsWith("/cbgs/ranking")) return respond(fixture("ranking"));
    if (/\/cbgs\/[^/]+\/inflows/.test(path)) return respond(fixture("inflows"));
    if (/\/cbgs\/[^/]+\/feature-impact/.test(path)) return respond(fixture("impact"));
    if (path.startsWith("/features/distributions")) return respond(fixture("distributions"));
    if (path.startsWith("/whatif")) return respond(fixture("scenario"));
    if (path.startsWith("/strategies") && method === "POST") {
      const st: StrategyDoc = {
        id: `fix${server.strategies.length + 1}`,
        label: (body as { label: string }).label,
        target: (body as { target: string }).target,
        deltas: (body as { deltas: Record<string, number> }).deltas,
        result_summary: { delta_si_pct: -2.5 },
        created: server.strategies.length + 1,
        updated: server.strategies.length + 1,
      };
      server.strategies.push(st);
      return respond({ v: 1, strategy: st });
    }
    if (path.startsWith("/strategies/") && method === "DELETE") {
      const id = path.split("/").pop()!;
      server.strategies = server.strategies.filter((s) => s.id !== id);
      return respond({ v: 1, deleted: id });
    }
    if (path.startsWith("/strategies")) {
      return respond({ v: 1, strategies: server.strategies });
    }
    throw new Error(`unmocked request: ${method} ${path}`);
  }));
  return server;
}

export function makeRoots(): {
  community: HTMLElement; ranking: HTMLElement; map: HTMLElement; whatif: HTMLElement;
} {
  document.body.innerHTML = `
    <section id="community-view"></section>
    <section id="cbg-view"></section>
    <section id="map-view"></section>
    <section id="whatif-view"></section>`;
  return {
    community: document.getElementById("community-view")!,
    ranking: document.getElementById("cbg-view")!,
    map: document.getElementById("map-view")!,
    whatif: document.getElementById("whatif-view")!,
  };
}
