// Community View: per-community demographic signatures (IQR boxes joined by
// smooth lines, median emphasized) and the inter-community flow matrix.

import * as d3 from "d3";
import type { FlowMatrixDoc, PartitionDoc, SignatureRow } from "./api";
import { ViewState } from "./state";
import { communityColor } from "./util";

const BOX_W = 26;
const BOX_GAP = 8;
const SIG_H = 64;

function renderSignature(svg: d3.Selection<SVGSVGElement, unknown, null, undefined>,
                         row: SignatureRow, color: string): void {
  const g = svg.append("g").attr("class", "signature");
  const boxes = row.groups;
  const y = d3.scaleLinear().domain([0, 1]).range([SIG_H - 4, 4]);
  const xOf = (i: number) => 6 + i * (BOX_W + BOX_GAP);

  const medians: [number, number][] = [];
  boxes.forEach((b, i) => {
    if (b.median === null || b.q1 === null || b.q3 === null) return;
    g.append("rect")
      .attr("class", "iqr-box")
      .attr("x", xOf(i))
      .attr("y", y(b.q3))
      .attr("width", BOX_W)
      .attr("height", Math.max(1, y(b.q1) - y(b.q3)))
      .attr("fill", color)
      .attr("opacity", 0.45);
    g.append("line")
      .attr("class", "median-line")
      .attr("x1", xOf(i))
      .attr("x2", xOf(i) + BOX_W)
      .attr("y1", y(b.median))
      .attr("y2", y(b.median))
      .attr("stroke", d3.color(color)?.darker(1.2)?.toString() ?? color)
      .attr("stroke-width", 2);
    medians.push([xOf(i) + BOX_W / 2, y(b.median)]);
  });
  if (medians.length > 1) {
    const line = d3.line().curve(d3.curveMonotoneX);
    g.append("path")
      .attr("class", "median-link")
      .attr("d", line(medians) ?? "")
      .attr("fill", "none")
      .attr("stroke", color)
      .attr("stroke-width", 1.2);
  }
}

export function renderCommunityView(root: HTMLElement, state: ViewState): void {
  const sel = d3.select(root);
  sel.selectAll("*").remove();
  const partition = state.partition;
  if (!partition || !state.attribute) {
    sel.append("p").attr("class", "placeholder").text("Detect communities to begin.");
    return;
  }
  sel.append("h2").text("Community View");

  const sigWrap = sel.append("div").attr("class", "signatures");
  const rows = partition.signatures[state.attribute] ?? [];
  for (const row of rows) {
    const block = sigWrap.append("div")
      .attr("class", "community-row")
      .attr("data-community", row.community);
    block.append("button")
      .attr("class", "community-label")
      .style("color", communityColor(row.community))
      .text(row.community === -1 ? "others" : `community ${row.community}`)
      .on("click", () => state.setCommunity(row.community));
    const svg = block.append("svg")
      .attr("width", 6 + row.groups.length * (BOX_W + BOX_GAP))
      .attr("height", SIG_H) as d3.Selection<SVGSVGElement, unknown, null, undefined>;
    renderSignature(svg, row, communityColor(row.community));
  }

  renderFlowMatrix(sel, state.matrix, partition, state);
}

function renderFlowMatrix(sel: d3.Selection<HTMLElement, unknown, null, undefined>,
                          matrix: FlowMatrixDoc | null,
                          partition: PartitionDoc, state: ViewState): void {
  if (!matrix) return;
  const n = matrix.labels.length;
  const cell = 44;
  const pad = 64;
  const svg = sel.append("svg")
    .attr("class", "flow-matrix")
    .attr("width", pad + n * cell)
    .attr("height", pad + n * cell);

  matrix.labels.forEach((label, i) => {
    const comm = label === "total" ? null : label === "others" ? -1 : Number(label);
    svg.append("text")
      .attr("class", "matrix-row-label")
      .attr("x", pad - 6)
      .attr("y", pad + i * cell + cell / 2 + 4)
      .attr("text-anchor", "end")
      .style("cursor", comm !== null ? "pointer" : "default")
      .style("fill", comm === null ? "#444" : communityColor(comm))
      .text(label)
      .on("click", () => {
        if (comm !== null) state.setCommunity(comm);
      });
    svg.append("text")
      .attr("x", pad + i * cell + cell / 2)
      .attr("y", pad - 8)
      .attr("text-anchor", "middle")
      .style("fill", comm === null ? "#444" : communityColor(comm))
      .text(label);
  });

  matrix.cells.forEach((row, i) => {
    row.forEach((c, j) => {
      const g = svg.append("g")
        .attr("class", "matrix-cell")
        .attr("data-row", i)
        .attr("data-col", j)
        .attr("transform", `translate(${pad + j * cell},${pad + i * cell})`);
      g.append("rect")
        .attr("width", cell - 2)
        .attr("height", cell - 2)
        .attr("fill", d3.interpolateBlues(0.08 + 0.84 * c.shade))
        .append("title")
        .text(`${matrix.labels[i]} -> ${matrix.labels[j]}: ${c.value.toFixed(1)}`);
      const shares = c.group_shares;
      const bw = (cell - 10) / Math.max(1, shares.length);
      shares.forEach((s, k) => {
        g.append("rect")
          .attr("class", "share-bar")
          .attr("x", 5 + k * bw)
          .attr("y", (cell - 2) * (1 - 0.8 * s))
          .attr("width", Math.max(1, bw - 2))
          .attr("height", (cell - 2) * 0.8 * s)
          .attr("fill", "#ffffff")
          .attr("opacity", 0.85);
      });
    });
  });
}
