// CBG View: the ranking table. Rows carry SI/BI bars and the group mixes
// behind them; after a what-if, the target row expands with strategy
// sub-rows, and thin gold bars overlay the originals.

import * as d3 from "d3";
import { ViewState } from "./state";
import { GOLD, clamp } from "./util";

const BAR_W = 90;

function bar(cellSel: d3.Selection<HTMLTableCellElement, unknown, null, undefined>,
             value: number, cls: string, color: string,
             overlay: number | null = null): void {
  const svg = cellSel.append("svg").attr("width", BAR_W + 38).attr("height", 16);
  svg.append("rect")
    .attr("class", cls)
    .attr("x", 0).attr("y", 3)
    .attr("width", clamp(value, 0, 1) * BAR_W)
    .attr("height", 8)
    .attr("fill", color);
  if (overlay !== null) {
    svg.append("rect")
      .attr("class", `${cls}-gold gold-overlay`)
      .attr("x", 0).attr("y", 6)
      .attr("width", clamp(overlay, 0, 1) * BAR_W)
      .attr("height", 3)
      .attr("fill", GOLD);
  }
  svg.append("text")
    .attr("x", BAR_W + 4).attr("y", 12)
    .attr("font-size", 10)
    .text(value.toFixed(3));
}

function mixBars(cellSel: d3.Selection<HTMLTableCellElement, unknown, null, undefined>,
                 mix: number[], overlay: number[] | null): void {
  const w = 14;
  const svg = cellSel.append("svg")
    .attr("width", mix.length * (w + 3))
    .attr("height", 26);
  mix.forEach((m, i) => {
    svg.append("rect")
      .attr("class", "mix-bar")
      .attr("x", i * (w + 3))
      .attr("y", 24 - 22 * clamp(m, 0, 1))
      .attr("width", w)
      .attr("height", 22 * clamp(m, 0, 1))
      .attr("fill", "#6a51a3");
    if (overlay) {
      svg.append("rect")
        .attr("class", "gold-overlay mix-gold")
        .attr("x", i * (w + 3) + w / 2 - 2)
        .attr("y", 24 - 22 * clamp(overlay[i], 0, 1))
        .attr("width", 4)
        .attr("height", 22 * clamp(overlay[i], 0, 1))
        .attr("fill", GOLD);
    }
  });
}

export function renderRankingView(root: HTMLElement, state: ViewState,
                                  onSaveStrategy?: () => void,
                                  onDeleteStrategy?: (id: string) => void): void {
  const sel = d3.select(root);
  sel.selectAll("*").remove();
  sel.append("h2").text("CBG View");
  if (!state.ranking) {
    sel.append("p").attr("class", "placeholder")
      .text("Select a community to rank its CBGs.");
    return;
  }

  const controls = sel.append("div").attr("class", "ranking-controls");
  controls.append("label").text("k neighbors ");
  controls.append("input")
    .attr("type", "number")
    .attr("id", "k-bridge-input")
    .attr("min", 2)
    .attr("value", state.kBridge)
    .on("change", function (this: HTMLInputElement) {
      state.kBridge = Number(this.value);
      state.emit();
    });

  const table = sel.append("table").attr("class", "ranking-table");
  const head = table.append("thead").append("tr");
  for (const h of ["CBG", "SI", "BI", "visitors", "neighborhood", "closeness"]) {
    head.append("th").text(h);
  }
  const body = table.append("tbody");

  for (const row of state.ranking.rows) {
    const isTarget = row.cbg === state.target;
    const scenario = isTarget ? state.scenario : null;
    const tr = body.append("tr")
      .attr("class", "ranking-row" + (isTarget ? " target-row" : ""))
      .attr("data-cbg", row.cbg)
      .on("click", () => state.setTarget(row.cbg));
    tr.append("td").text(row.cbg);
    bar(tr.append("td"), row.si, "si-bar", "#d65f5f",
        scenario ? scenario.si_after : null);
    bar(tr.append("td"), row.bi, "bi-bar", "#4878d0", null);
    mixBars(tr.append("td"), row.pi, scenario ? scenario.mix_after : null);
    mixBars(tr.append("td"), row.pi_prime, null);
    tr.append("td").text(row.closeness.toFixed(3));

    if (isTarget && (scenario || state.strategies.some((s) => s.target === row.cbg))) {
      const sub = body.append("tr").attr("class", "strategy-subrows");
      const cell = sub.append("td").attr("colspan", 6);
      if (scenario) {
        cell.append("div")
          .attr("class", "pending-strategy")
          .text(`pending: SI ${scenario.si_before.toFixed(3)} -> ` +
                `${scenario.si_after.toFixed(3)} (${scenario.delta_si_pct.toFixed(2)}%)`)
          .append("button")
          .attr("class", "save-strategy")
          .text("save")
          .on("click", (event: Event) => {
            event.stopPropagation();
            onSaveStrategy?.();
          });
      }
      for (const s of state.strategies.filter((s) => s.target === row.cbg)) {
        const line = cell.append("div")
          .attr("class", "strategy-row")
          .attr("data-strategy", s.id);
        line.append("span").text(`${s.label}: `);
        line.append("span").text(JSON.stringify(s.deltas));
        const summary = s.result_summary as { delta_si_pct?: number };
        if (typeof summary.delta_si_pct === "number") {
          line.append("span").text(` dSI ${summary.delta_si_pct.toFixed(2)}%`);
        }
        line.append("button")
          .attr("class", "delete-strategy")
          .text("delete")
          .on("click", (event: Event) => {
            event.stopPropagation();
            onDeleteStrategy?.(s.id);
          });
      }
    }
  }
}
