// Orchestration: one ViewState drives all four views; interactions funnel
// through the controller, and what-if requests are debounced with
// latest-wins cancellation so at most one result lands.

import { ApiClient } from "./api";
import { renderCommunityView } from "./community";
import { renderMapView } from "./mapview";
import { renderRankingView } from "./ranking";
import { renderWhatIfView } from "./whatifview";
import { ViewState } from "./state";
import { debounce } from "./util";

export interface Roots {
  community: HTMLElement;
  ranking: HTMLElement;
  map: HTMLElement;
  whatif: HTMLElement;
}

export class Controller {
  readonly state = new ViewState();
  whatifCalls = 0;
  sortMode: "magnitude" | "variance" = "magnitude";
  panelExpanded = false;
  private requestWhatif: () => void;
  private requestSeq = 0;

  constructor(readonly api: ApiClient, private roots: Roots,
              debounceMs = 300) {
    this.requestWhatif = debounce(() => void this.fireWhatif(), debounceMs);
    this.state.subscribe(() => this.renderAll());
  }

  async boot(attribute: string, wMin = 0): Promise<void> {
    const partition = await this.api.detect(attribute, wMin);
    this.state.partition = partition;
    this.state.attribute = partition.attribute;
    this.state.matrix = await this.api.flowMatrix("sum");
    this.state.distributions = await this.api.distributions();
    this.state.strategies = (await this.api.listStrategies()).strategies;
    this.state.emit();
  }

  async selectCommunity(community: number): Promise<void> {
    this.state.setCommunity(community);
    this.state.ranking = await this.api.ranking(community, this.state.kBridge);
    this.state.emit();
  }

  async selectTarget(cbg: string): Promise<void> {
    this.state.setTarget(cbg);
    if (this.state.target !== cbg) return; // rejected: not in community
    this.state.inflows = await this.api.inflows(cbg, this.state.kBridge);
    try {
      this.state.impact = await this.api.featureImpact(cbg);
    } catch {
      this.state.impact = null; // model not trained yet
    }
    this.state.emit();
  }

  /** KDE line drag: update the pending delta and debounce one /whatif call. */
  handleDeltaChange(poiType: string, value: number): void {
    this.state.setDelta(poiType, value);
    this.requestWhatif();
  }

  private async fireWhatif(): Promise<void> {
    if (!this.state.target || !this.state.hasPendingIntervention()) return;
    const seq = ++this.requestSeq;
    this.whatifCalls += 1;
    const doc = await this.api.whatif(
      this.state.target, this.state.deltas, this.state.kBridge);
    if (seq === this.requestSeq) {
      this.state.setScenario(doc); // stale responses are dropped (latest wins)
    }
  }

  async saveStrategy(label?: string): Promise<void> {
    if (!this.state.target || !this.state.hasPendingIntervention()) return;
    const res = await this.api.saveStrategy(
      label ?? `strategy ${this.state.strategies.length + 1}`,
      this.state.target, this.state.deltas);
    this.state.strategies = [...this.state.strategies, res.strategy];
    this.state.emit();
  }

  async deleteStrategy(id: string): Promise<void> {
    await this.api.deleteStrategy(id);
    this.state.strategies = this.state.strategies.filter((s) => s.id !== id);
    this.state.emit();
  }

  async reloadStrategies(): Promise<void> {
    this.state.strategies = (await this.api.listStrategies()).strategies;
    this.state.emit();
  }

  hoverGroupArc(cbg: string, groupIndex: number): void {
    const groups = this.state.impact?.groups ?? [];
    if (groupIndex < groups.length) {
      this.state.hoveredInstance = { cbg, group: groups[groupIndex].group };
      this.state.emit();
    }
  }

  renderAll(): void {
    renderCommunityView(this.roots.community, this.state);
    renderRankingView(this.roots.ranking, this.state,
                      () => void this.saveStrategy(),
                      (id) => void this.deleteStrategy(id));
    renderMapView(this.roots.map, this.state, {
      onGroupArcHover: (cbg, gi) => this.hoverGroupArc(cbg, gi),
    });
    renderWhatIfView(this.roots.whatif, this.state, {
      onDeltaChange: (poi, v) => this.handleDeltaChange(poi, v),
      sortMode: this.sortMode,
      onSortChange: (mode) => {
        this.sortMode = mode;
        this.renderAll();
      },
      expanded: this.panelExpanded,
      onToggleExpand: () => {
        this.panelExpanded = !this.panelExpanded;
        this.renderAll();
      },
    });
  }
}
