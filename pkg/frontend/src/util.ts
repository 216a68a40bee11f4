// Small shared helpers: debouncing, KDE, arcs, the Dorling relaxation,
// and the community palette.

/** Trailing-edge debounce; repeated calls within `ms` collapse to one. */
export function debounce<A extends unknown[]>(fn: (...args: A) => void, ms: number):
    (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, ms);
  };
}

/** Silverman's rule-of-thumb bandwidth. */
export function silvermanBandwidth(values: number[]): number {
  const n = values.length;
  if (n < 2) return 1;
  const mean = values.reduce((a, b) => a + b, 0) / n;
  const sd = Math.sqrt(values.reduce((a, b) => a + (b - mean) ** 2, 0) / n);
  const sorted = [...values].sort((a, b) => a - b);
  const q = (p: number) => {
    const h = (n - 1) * p;
    const lo = Math.floor(h);
    const hi = Math.min(lo + 1, n - 1);
    return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
  };
  const iqr = q(0.75) - q(0.25);
  const spread = Math.min(sd, iqr / 1.34) || sd || 1;
  return 0.9 * spread * Math.pow(n, -1 / 5) || 1;
}

/** Gaussian KDE evaluated on an even grid over [lo, hi]. */
export function kde(values: number[], lo: number, hi: number, points = 60):
    { x: number; y: number }[] {
  const h = silvermanBandwidth(values);
  const out: { x: number; y: number }[] = [];
  const norm = 1 / (values.length * h * Math.sqrt(2 * Math.PI));
  for (let i = 0; i < points; i++) {
    const x = lo + ((hi - lo) * i) / (points - 1);
    let y = 0;
    for (const v of values) {
      const z = (x - v) / h;
      y += Math.exp(-0.5 * z * z);
    }
    out.push({ x, y: y * norm });
  }
  return out;
}

export interface ArcSegment {
  fraction: number;
  start: number; // radians
  end: number;
}

/**
 * Proportion arcs around a glyph: one segment per group, fractions summing
 * to 1 (the render-time invariant the glyph asserts).
 */
export function proportionArcs(theta: number[]): ArcSegment[] {
  const total = theta.reduce((a, b) => a + b, 0);
  if (total <= 0) return [];
  let angle = -Math.PI / 2;
  return theta.map((t) => {
    const fraction = t / total;
    const seg = { fraction, start: angle, end: angle + fraction * 2 * Math.PI };
    angle = seg.end;
    return seg;
  });
}

export interface Bubble {
  id: string;
  x: number;
  y: number;
  r: number;
}

/**
 * Dorling layout by iterative pairwise collision relaxation from the seed
 * positions: overlapping bubbles push apart, and every bubble is pulled
 * gently back toward its geographic seat.
 */
export function dorlingLayout(seeds: Bubble[], iterations = 150): Bubble[] {
  const nodes = seeds.map((b) => ({ ...b, sx: b.x, sy: b.y }));
  for (let it = 0; it < iterations; it++) {
    for (const n of nodes) {
      n.x += (n.sx - n.x) * 0.02;
      n.y += (n.sy - n.y) * 0.02;
    }
    for (let i = 0; i < nodes.length; i++) {
      for (let j = i + 1; j < nodes.length; j++) {
        const a = nodes[i];
        const b = nodes[j];
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let d = Math.hypot(dx, dy);
        const minDist = a.r + b.r;
        if (d >= minDist) continue;
        if (d === 0) {
          dx = 1e-3 * (i + 1);
          dy = 1e-3 * (j + 1);
          d = Math.hypot(dx, dy);
        }
        const push = (minDist - d) / d / 2;
        a.x -= dx * push;
        a.y -= dy * push;
        b.x += dx * push;
        b.y += dy * push;
      }
    }
  }
  return nodes.map(({ id, x, y, r }) => ({ id, x, y, r }));
}

export function maxOverlap(bubbles: Bubble[]): number {
  let worst = 0;
  for (let i = 0; i < bubbles.length; i++) {
    for (let j = i + 1; j < bubbles.length; j++) {
      const d = Math.hypot(bubbles[i].x - bubbles[j].x, bubbles[i].y - bubbles[j].y);
      worst = Math.max(worst, bubbles[i].r + bubbles[j].r - d);
    }
  }
  return worst;
}

// a categorical palette with at least 10 distinguishable hues; index -1
// (`others`) renders neutral grey
const PALETTE = [
  "#4878d0", "#51c44a", "#ee854a", "#d65f5f", "#956cb4",
  "#8c613c", "#dc7ec0", "#797979", "#d5bb67", "#82c6e2",
  "#2f4b7c", "#ffa600",
];

export function communityColor(community: number | null): string {
  if (community === null || community < 0) return "#c4c4c4";
  return PALETTE[community % PALETTE.length];
}

export const GOLD = "#d4a017";

export function clamp(v: number, lo: number, hi: number): number {
  return Math.max(lo, Math.min(hi, v));
}
