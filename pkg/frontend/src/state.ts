// Single view-state store; every view re-renders from here, none keeps
// private copies of server data.

import type {
  DistributionsDoc,
  FlowMatrixDoc,
  InflowsDoc,
  PartitionDoc,
  RankingDoc,
  ScenarioDoc,
  ShapDoc,
  StrategyDoc,
} from "./api";

export type Listener = (state: ViewState) => void;

export class ViewState {
  attribute: string | null = null;
  community: number | null = null;
  target: string | null = null;
  kBridge = 20;
  deltas: Record<string, number> = {};

  partition: PartitionDoc | null = null;
  matrix: FlowMatrixDoc | null = null;
  ranking: RankingDoc | null = null;
  inflows: InflowsDoc | null = null;
  impact: ShapDoc | null = null;
  scenario: ScenarioDoc | null = null;
  strategies: StrategyDoc[] = [];
  distributions: DistributionsDoc | null = null;
  hoveredInstance: { cbg: string; group: string } | null = null;

  private listeners: Listener[] = [];

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  emit(): void {
    for (const fn of this.listeners) fn(this);
  }

  communityMembers(community: number): string[] {
    if (!this.partition) return [];
    if (community === -1) return this.partition.others;
    const entry = this.partition.communities.find((c) => c.id === community);
    return entry ? entry.members : [];
  }

  setPartition(doc: PartitionDoc): void {
    this.partition = doc;
    this.attribute = doc.attribute;
    this.community = null;
    this.clearTarget();
    this.emit();
  }

  setCommunity(community: number): void {
    this.community = community;
    if (this.target && !this.communityMembers(community).includes(this.target)) {
      this.clearTarget();
    }
    this.emit();
  }

  /** The target must belong to the selected community; deltas reset on change. */
  setTarget(cbg: string | null): void {
    if (cbg !== null) {
      if (this.community === null) return;
      if (!this.communityMembers(this.community).includes(cbg)) return;
    }
    if (cbg !== this.target) {
      this.target = cbg;
      this.deltas = {};
      this.scenario = null;
      this.inflows = null;
      this.impact = null;
      this.hoveredInstance = null;
    }
    this.emit();
  }

  private clearTarget(): void {
    this.target = null;
    this.deltas = {};
    this.scenario = null;
    this.inflows = null;
    this.impact = null;
    this.hoveredInstance = null;
  }

  setDelta(poiType: string, value: number): void {
    this.deltas = { ...this.deltas, [poiType]: value };
    this.emit();
  }

  resetDeltas(): void {
    this.deltas = {};
    this.scenario = null;
    this.emit();
  }

  setScenario(doc: ScenarioDoc | null): void {
    this.scenario = doc;
    this.emit();
  }

  hasPendingIntervention(): boolean {
    return Object.keys(this.deltas).length > 0;
  }
}
