// What-If View: CPC bar, the feature control panel of KDE plots with
// draggable value lines (POI features by default), and per-group feature
// impact plots with std error bars, re-sortable and overlaid in gold after
// an intervention.

import * as d3 from "d3";
import type { ShapDoc } from "./api";
import { ViewState } from "./state";
import { GOLD, clamp, kde } from "./util";

const PANEL_W = 240;
const ROW_H = 44;

export interface WhatIfHandlers {
  onDeltaChange?: (poiType: string, value: number) => void;
  sortMode?: "magnitude" | "variance";
  onSortChange?: (mode: "magnitude" | "variance") => void;
  expanded?: boolean;
  onToggleExpand?: () => void;
}

export function renderWhatIfView(root: HTMLElement, state: ViewState,
                                 handlers: WhatIfHandlers = {}): void {
  const sel = d3.select(root);
  sel.selectAll("*").remove();
  sel.append("h2").text("What-If View");
  if (!state.target) {
    sel.append("p").attr("class", "placeholder")
      .text("Pick a target CBG in the ranking table.");
    return;
  }

  if (state.inflows && state.inflows.cpc !== null) {
    const cpcWrap = sel.append("div").attr("class", "cpc-bar-wrap");
    cpcWrap.append("span").text("prediction CPC ");
    const svg = cpcWrap.append("svg").attr("width", 160).attr("height", 14);
    svg.append("rect").attr("width", 150).attr("height", 10).attr("y", 2)
      .attr("fill", "#eee");
    svg.append("rect")
      .attr("class", "cpc-bar")
      .attr("width", 150 * clamp(state.inflows.cpc, 0, 1))
      .attr("height", 10).attr("y", 2)
      .attr("fill", "#4878d0");
    cpcWrap.append("span").text(` ${state.inflows.cpc.toFixed(3)}`);
  }

  renderControlPanel(sel, state, handlers);
  renderImpactPlots(sel, state, handlers);
}

function renderControlPanel(sel: d3.Selection<HTMLElement, unknown, null, undefined>,
                            state: ViewState, handlers: WhatIfHandlers): void {
  const dist = state.distributions;
  if (!dist) return;
  const panel = sel.append("div").attr("class", "feature-control-panel");
  const head = panel.append("div");
  head.append("h3").text("Feature Control Panel");
  head.append("button")
    .attr("class", "expand-panel")
    .text(handlers.expanded ? "POI features only" : "show all features")
    .on("click", () => handlers.onToggleExpand?.());

  if (handlers.expanded) {
    // sociodemographic rows are display-only; editing them requires the
    // engine's expert override, which the panel does not expose
    const values = dist.population;
    const hi = Math.max(...values, 1) * 1.1;
    const row = panel.append("div")
      .attr("class", "kde-row kde-demographic")
      .attr("data-feature", "population");
    row.append("span").attr("class", "kde-label").text("population");
    const svg = row.append("svg").attr("width", PANEL_W).attr("height", ROW_H);
    const density = kde(values, 0, hi, 50);
    const ymax = Math.max(...density.map((p) => p.y), 1e-9);
    const x = d3.scaleLinear().domain([0, hi]).range([4, PANEL_W - 4]);
    const y = d3.scaleLinear().domain([0, ymax]).range([ROW_H - 4, 6]);
    const area = d3.area<{ x: number; y: number }>()
      .x((p) => x(p.x)).y0(ROW_H - 4).y1((p) => y(p.y)).curve(d3.curveBasis);
    svg.append("path").attr("class", "kde-area")
      .attr("d", area(density) ?? "")
      .attr("fill", "#d8cbe8").attr("opacity", 0.8);
  }

  for (const poi of dist.poi_types) {
    const values = dist.densities[poi] ?? [];
    const lo = 0;
    const hi = Math.max(...values, 1) * 1.15;
    const current = currentValue(state, poi);
    const row = panel.append("div").attr("class", "kde-row").attr("data-poi", poi);
    row.append("span").attr("class", "kde-label").text(poi);
    const svg = row.append("svg")
      .attr("width", PANEL_W)
      .attr("height", ROW_H);
    const density = kde(values, lo, hi, 50);
    const ymax = Math.max(...density.map((p) => p.y), 1e-9);
    const x = d3.scaleLinear().domain([lo, hi]).range([4, PANEL_W - 4]);
    const y = d3.scaleLinear().domain([0, ymax]).range([ROW_H - 4, 6]);
    const area = d3.area<{ x: number; y: number }>()
      .x((p) => x(p.x)).y0(ROW_H - 4).y1((p) => y(p.y)).curve(d3.curveBasis);
    svg.append("path").attr("class", "kde-area")
      .attr("d", area(density) ?? "")
      .attr("fill", "#b5c7e7").attr("opacity", 0.8);

    const line = svg.append("line")
      .attr("class", "value-line")
      .attr("data-poi", poi)
      .attr("x1", x(current)).attr("x2", x(current))
      .attr("y1", 2).attr("y2", ROW_H - 2)
      .attr("stroke", state.deltas[poi] !== undefined ? GOLD : "#333")
      .attr("stroke-width", 3)
      .style("cursor", "ew-resize");

    const drag = d3.drag<SVGLineElement, unknown>()
      .on("drag", (event) => {
        const v = clamp(x.invert(event.x), lo, hi);
        line.attr("x1", x(v)).attr("x2", x(v)).attr("stroke", GOLD);
        handlers.onDeltaChange?.(poi, v);
      });
    line.call(drag);
  }
}

function currentValue(state: ViewState, poi: string): number {
  if (state.deltas[poi] !== undefined) return state.deltas[poi];
  // the target's current density rides along in the last scenario, else 0
  return 0;
}

function orderedSlots(doc: ShapDoc, mode: "magnitude" | "variance"): string[] {
  const order = mode === "variance" ? doc.order_by_variance : doc.order_by_magnitude;
  return order.filter((name) => name.startsWith("dest_poi."));
}

function renderImpactPlots(sel: d3.Selection<HTMLElement, unknown, null, undefined>,
                           state: ViewState, handlers: WhatIfHandlers): void {
  const doc = state.impact;
  if (!doc || !doc.groups.length) return;
  const wrap = sel.append("div").attr("class", "feature-impact");
  const header = wrap.append("div");
  header.append("h3").text("Feature Impact");
  const mode = handlers.sortMode ?? "magnitude";
  const toggle = header.append("button")
    .attr("class", "sort-toggle")
    .text(`sort: ${mode}`)
    .on("click", () =>
      handlers.onSortChange?.(mode === "magnitude" ? "variance" : "magnitude"));
  void toggle;

  const slots = orderedSlots(doc, mode).slice(0, 8);
  const goldDoc = state.scenario?.shap ?? null;
  const plotW = 180;

  for (const groupDoc of doc.groups) {
    const col = wrap.append("div")
      .attr("class", "impact-column")
      .attr("data-group", groupDoc.group);
    col.append("h4").text(groupDoc.group);
    const svg = col.append("svg")
      .attr("width", plotW + 130)
      .attr("height", slots.length * 22 + 10);
    const byName = new Map(groupDoc.slots.map((s) => [s.name, s]));
    const goldGroup = goldDoc?.groups.find((g) => g.group === groupDoc.group);
    const goldByName = new Map((goldGroup?.slots ?? []).map((s) => [s.name, s]));
    const extent = Math.max(
      ...slots.map((n) => Math.abs(byName.get(n)?.mean ?? 0)
        + Math.abs(byName.get(n)?.std ?? 0)), 1e-6);
    const x = d3.scaleLinear().domain([-extent, extent]).range([100, 100 + plotW]);

    slots.forEach((name, i) => {
      const slot = byName.get(name);
      if (!slot) return;
      const yy = 16 + i * 22;
      svg.append("text").attr("x", 96).attr("y", yy + 4)
        .attr("text-anchor", "end").attr("font-size", 10)
        .text(name.replace("dest_poi.", ""));
      svg.append("line")
        .attr("x1", x(0)).attr("x2", x(0))
        .attr("y1", yy - 8).attr("y2", yy + 8)
        .attr("stroke", "#ccc");
      svg.append("line")
        .attr("class", "std-bar")
        .attr("x1", x(slot.mean - slot.std)).attr("x2", x(slot.mean + slot.std))
        .attr("y1", yy).attr("y2", yy)
        .attr("stroke", "#6a51a3").attr("stroke-width", 1.5);
      svg.append("circle")
        .attr("class", "impact-dot")
        .attr("data-slot", name)
        .attr("cx", x(slot.mean)).attr("cy", yy).attr("r", 4)
        .attr("fill", "#6a51a3");
      const gold = goldByName.get(name);
      if (gold) {
        svg.append("circle")
          .attr("class", "impact-dot-gold gold-overlay")
          .attr("data-slot", name)
          .attr("cx", x(gold.mean)).attr("cy", yy).attr("r", 3)
          .attr("fill", GOLD);
      }
    });

    // instance-level overlays when a glyph group arc is hovered
    const hovered = state.hoveredInstance;
    if (hovered && hovered.group === groupDoc.group) {
      const pts: [number, number][] = [];
      slots.forEach((name, i) => {
        const v = byName.get(name)?.instance_values[hovered.cbg];
        if (v !== undefined) pts.push([x(clamp(v, -extent, extent)), 16 + i * 22]);
      });
      if (pts.length > 1) {
        svg.append("path")
          .attr("class", "instance-line")
          .attr("d", d3.line()(pts) ?? "")
          .attr("fill", "none")
          .attr("stroke", "#6a51a3")
          .attr("stroke-width", 1.2)
          .attr("stroke-dasharray", "3,2");
      }
      const goldPts: [number, number][] = [];
      slots.forEach((name, i) => {
        const v = goldByName.get(name)?.instance_values[hovered.cbg];
        if (v !== undefined) goldPts.push([x(clamp(v, -extent, extent)), 16 + i * 22]);
      });
      if (goldPts.length > 1) {
        svg.append("path")
          .attr("class", "instance-line-gold gold-overlay")
          .attr("d", d3.line()(goldPts) ?? "")
          .attr("fill", "none")
          .attr("stroke", GOLD)
          .attr("stroke-width", 1.2);
      }
    }
  }
}
