// Typed client for the analytics service (JSON payloads, v1).

export interface DatasetSummary {
  v: number;
  id: string;
  n_cbgs: number;
  n_edges: number;
  total_flow: number;
  attributes: Record<string, string[]>;
  poi_types: string[];
}

export interface SignatureBox {
  q1: number | null;
  median: number | null;
  q3: number | null;
}

export interface SignatureRow {
  community: number;
  groups: SignatureBox[];
}

export interface PartitionDoc {
  v: number;
  communities: { id: number; members: string[] }[];
  others: string[];
  modularity: number;
  attribute: string;
  signatures: Record<string, SignatureRow[]>;
}

export interface MatrixCell {
  value: number;
  shade: number;
  group_shares: number[];
}

export interface FlowMatrixDoc {
  v: number;
  aggregation: string;
  labels: string[];
  attribute: string;
  cells: MatrixCell[][];
}

export interface RankingRow {
  cbg: string;
  si: number;
  bi: number;
  closeness: number;
  pi: number[];
  pi_prime: number[];
}

export interface RankingDoc {
  v: number;
  community: number;
  k_bridge: number;
  attribute: string;
  rows: RankingRow[];
}

export interface GlyphEntry {
  cbg: string;
  community: number | null;
  population: number;
  theta: number[] | null;
  flow_to_target: number;
  flow_share_of_population: number | null;
  group_contribution: number[] | null;
  boundary: unknown;
}

export interface InflowsDoc {
  v: number;
  target: GlyphEntry;
  neighbors: GlyphEntry[];
  k_bridge: number;
  cpc: number | null;
}

export interface ShapSlot {
  name: string;
  mean: number;
  std: number;
  instance_values: Record<string, number>;
}

export interface ShapDoc {
  v: number;
  groups: { group: string; slots: ShapSlot[] }[];
  order_by_magnitude: string[];
  order_by_variance: string[];
  target?: string;
}

export interface ScenarioDoc {
  v: number;
  target: string;
  attribute: string;
  origins: string[];
  groups: string[];
  flow_before: Record<string, Record<string, number>>;
  flow_after: Record<string, Record<string, number>>;
  delta: Record<string, Record<string, number>>;
  new_flows: Record<string, Record<string, number>>;
  mix_before: number[];
  mix_after: number[];
  si_before: number;
  si_after: number;
  delta_si: number;
  delta_si_pct: number;
  shap: ShapDoc | null;
}

export interface StrategyDoc {
  id: string;
  label: string;
  target: string;
  deltas: Record<string, number>;
  result_summary: Record<string, unknown>;
  created: number;
  updated: number;
}

export interface DistributionsDoc {
  v: number;
  poi_types: string[];
  densities: Record<string, number[]>;
  population: number[];
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) throw new Error(`GET ${path}: ${res.status}`);
    return res.json() as Promise<T>;
  }

  private async send<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(this.base + path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) throw new Error(`${method} ${path}: ${res.status}`);
    return res.json() as Promise<T>;
  }

  detect(attribute: string, wMin: number, maxCommunities = 10): Promise<PartitionDoc> {
    return this.send("POST", "/communities/detect", {
      attribute, w_min: wMin, max_communities: maxCommunities,
    });
  }

  flowMatrix(aggregation: string): Promise<FlowMatrixDoc> {
    return this.get(`/flow-matrix?aggregation=${aggregation}`);
  }

  ranking(community: number, kBridge: number): Promise<RankingDoc> {
    return this.get(`/cbgs/ranking?community=${community}&k_bridge=${kBridge}`);
  }

  inflows(cbg: string, kBridge: number): Promise<InflowsDoc> {
    return this.get(`/cbgs/${encodeURIComponent(cbg)}/inflows?k_bridge=${kBridge}`);
  }

  featureImpact(cbg: string): Promise<ShapDoc> {
    return this.get(`/cbgs/${encodeURIComponent(cbg)}/feature-impact`);
  }

  whatif(target: string, deltas: Record<string, number>, kBridge: number): Promise<ScenarioDoc> {
    return this.send("POST", "/whatif", { target, deltas, k_bridge: kBridge });
  }

  distributions(): Promise<DistributionsDoc> {
    return this.get("/features/distributions");
  }

  listStrategies(): Promise<{ strategies: StrategyDoc[] }> {
    return this.get("/strategies");
  }

  saveStrategy(label: string, target: string, deltas: Record<string, number>):
      Promise<{ strategy: StrategyDoc }> {
    return this.send("POST", "/strategies", { label, target, deltas });
  }

  updateStrategy(id: string, patch: { label?: string; deltas?: Record<string, number> }):
      Promise<{ strategy: StrategyDoc }> {
    return this.send("PUT", `/strategies/${id}`, patch);
  }

  deleteStrategy(id: string): Promise<{ deleted: string }> {
    return this.send("DELETE", `/strategies/${id}`);
  }
}
