// Map View: a navigational community choropleth plus the Dorling map of the
// target's neighborhood, drawn as filter-bubble glyphs. Gold arcs overlay the
// flow arcs once a what-if scenario is active.

import * as d3 from "d3";
import type { GlyphEntry, ScenarioDoc } from "./api";
import { ViewState } from "./state";
import { Bubble, GOLD, clamp, communityColor, dorlingLayout, proportionArcs } from "./util";

const W = 420;
const H = 320;

function arcPath(cx: number, cy: number, r: number, start: number, end: number): string {
  // shrink full circles slightly so the path does not degenerate
  if (end - start >= 2 * Math.PI - 1e-6) end = start + 2 * Math.PI - 1e-4;
  const sx = cx + r * Math.cos(start);
  const sy = cy + r * Math.sin(start);
  const ex = cx + r * Math.cos(end);
  const ey = cy + r * Math.sin(end);
  const large = end - start > Math.PI ? 1 : 0;
  return `M ${sx} ${sy} A ${r} ${r} 0 ${large} 1 ${ex} ${ey}`;
}

export interface GlyphHandlers {
  onGroupArcHover?: (cbg: string, groupIndex: number) => void;
}

export function renderGlyph(layer: d3.Selection<SVGGElement, unknown, null, undefined>,
                            entry: GlyphEntry, bubble: Bubble, isTarget: boolean,
                            scenario: ScenarioDoc | null,
                            handlers: GlyphHandlers = {}): void {
  const g = layer.append("g")
    .attr("class", "glyph" + (isTarget ? " glyph-target" : ""))
    .attr("data-cbg", entry.cbg)
    .attr("transform", `translate(${bubble.x},${bubble.y})`);

  g.append("circle")
    .attr("class", "glyph-bg")
    .attr("r", bubble.r)
    .attr("fill", isTarget ? "#1a1a1a" : communityColor(entry.community))
    .attr("opacity", 0.92);

  // centered boundary silhouette placeholder (actual polygon when provided)
  g.append("circle")
    .attr("class", "glyph-core")
    .attr("r", bubble.r * 0.24)
    .attr("fill", "#ffffff")
    .attr("opacity", 0.35);

  // white arcs: resident group proportions (must sum to one)
  if (entry.theta) {
    const arcs = proportionArcs(entry.theta);
    const total = arcs.reduce((a, s) => a + s.fraction, 0);
    if (Math.abs(total - 1) > 1e-6) {
      throw new Error(`glyph arcs for ${entry.cbg} sum to ${total}`);
    }
    arcs.forEach((seg, gi) => {
      const gap = 0.03;
      layerArc(g, "group-arc", bubble.r * 0.62, seg.start + gap, seg.end - gap, "#ffffff",
               Math.max(1.5, bubble.r * 0.1))
        .attr("data-group", gi)
        .on("mouseenter", () => handlers.onGroupArcHover?.(entry.cbg, gi));
    });
  }

  // thick outer arc: share of residents visiting the target
  const share = entry.flow_share_of_population;
  if (!isTarget && share !== null && share > 0) {
    const frac = clamp(share * 8, 0.015, 1); // visual gain; tiny shares stay visible
    layerArc(g, "flow-arc", bubble.r * 0.88, -Math.PI / 2,
             -Math.PI / 2 + frac * 2 * Math.PI, "#ffffff", Math.max(2.5, bubble.r * 0.16));
  }

  // gold arcs: adjusted per-origin flows after the intervention
  if (!isTarget && scenario) {
    let before = 0;
    let after = 0;
    for (const grp of scenario.groups) {
      before += scenario.flow_before[grp]?.[entry.cbg] ?? 0;
      after += scenario.flow_after[grp]?.[entry.cbg] ?? 0;
    }
    if (before > 0 || after > 0) {
      const base = entry.flow_share_of_population ?? 0;
      const scale = before > 0 ? after / before : 1;
      const frac = clamp(base * 8 * scale, 0.015, 1);
      layerArc(g, "flow-arc-gold gold-overlay", bubble.r * 0.78, -Math.PI / 2,
               -Math.PI / 2 + frac * 2 * Math.PI, GOLD, Math.max(1.8, bubble.r * 0.1));
    }
  }
}

function layerArc(g: d3.Selection<SVGGElement, unknown, null, undefined>, cls: string,
                  r: number, start: number, end: number, color: string,
                  width: number) {
  return g.append("path")
    .attr("class", cls)
    .attr("d", arcPath(0, 0, r, start, Math.max(end, start + 0.02)))
    .attr("fill", "none")
    .attr("stroke", color)
    .attr("stroke-width", width)
    .attr("stroke-linecap", "round");
}

export function renderMapView(root: HTMLElement, state: ViewState,
                              handlers: GlyphHandlers = {}): void {
  const sel = d3.select(root);
  sel.selectAll("*").remove();
  sel.append("h2").text("Map View");

  renderNavigational(sel, state);

  if (!state.inflows) {
    sel.append("p").attr("class", "placeholder")
      .text("Select a target CBG to see its neighborhood.");
    return;
  }
  const doc = state.inflows;
  const svg = sel.append("svg").attr("class", "dorling-map")
    .attr("width", W).attr("height", H);
  const layer = svg.append("g") as d3.Selection<SVGGElement, unknown, null, undefined>;

  const entries = [doc.target, ...doc.neighbors];
  const maxPop = Math.max(...entries.map((e) => e.population), 1);
  const seeds: Bubble[] = entries.map((e, i) => {
    const angle = (2 * Math.PI * i) / Math.max(1, entries.length - 1);
    const dist = e.cbg === doc.target.cbg ? 0 : 90 + 40 * (i % 3);
    return {
      id: e.cbg,
      x: W / 2 + dist * Math.cos(angle),
      y: H / 2 + dist * Math.sin(angle),
      r: 10 + 22 * Math.sqrt(e.population / maxPop),
    };
  });
  const placed = dorlingLayout(seeds);
  const byId = new Map(placed.map((b) => [b.id, b]));
  for (const entry of entries) {
    const bubble = byId.get(entry.cbg);
    if (!bubble) continue;
    renderGlyph(layer, entry, bubble, entry.cbg === doc.target.cbg,
                state.scenario, handlers);
  }
  if (doc.cpc !== null) {
    sel.append("p").attr("class", "map-cpc")
      .text(`model CPC at target: ${doc.cpc.toFixed(3)}`);
  }
}

function renderNavigational(sel: d3.Selection<HTMLElement, unknown, null, undefined>,
                            state: ViewState): void {
  const partition = state.partition;
  if (!partition) return;
  const members: { cbg: string; community: number }[] = [];
  for (const c of partition.communities) {
    for (const m of c.members) members.push({ cbg: m, community: c.id });
  }
  for (const m of partition.others) members.push({ cbg: m, community: -1 });
  members.sort((a, b) => (a.cbg < b.cbg ? -1 : 1));

  const focus = state.target !== null;
  const side = Math.ceil(Math.sqrt(members.length));
  const cellPx = Math.min(12, Math.floor(280 / side));
  const svg = sel.append("svg")
    .attr("class", "nav-map" + (focus ? " nav-focus" : " nav-full"))
    .attr("width", side * cellPx)
    .attr("height", side * cellPx);
  const neighborhood = new Set(
    state.inflows ? state.inflows.neighbors.map((n) => n.cbg) : []);
  members.forEach((m, i) => {
    const dimmed = focus && m.cbg !== state.target && !neighborhood.has(m.cbg);
    svg.append("rect")
      .attr("class", "nav-cell")
      .attr("data-cbg", m.cbg)
      .attr("x", (i % side) * cellPx)
      .attr("y", Math.floor(i / side) * cellPx)
      .attr("width", cellPx - 1)
      .attr("height", cellPx - 1)
      .attr("fill", m.cbg === state.target ? "#1a1a1a" : communityColor(m.community))
      .attr("opacity", dimmed ? 0.25 : 1);
  });
}
