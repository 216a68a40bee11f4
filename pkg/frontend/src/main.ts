import { ApiClient } from "./api";
import { Controller } from "./controller";

async function start(): Promise<void> {
  const api = new ApiClient("");
  const controller = new Controller(api, {
    community: document.getElementById("community-view")!,
    ranking: document.getElementById("cbg-view")!,
    map: document.getElementById("map-view")!,
    whatif: document.getElementById("whatif-view")!,
  });

  // community selection and target selection are driven by view callbacks,
  // wired through delegated listeners so views stay renderers
  document.getElementById("community-view")!.addEventListener("click", (e) => {
    const btn = (e.target as HTMLElement).closest(".community-label, .matrix-row-label");
    if (!btn) return;
    const row = btn.closest("[data-community]");
    if (row) void controller.selectCommunity(Number(row.getAttribute("data-community")));
  });
  document.getElementById("cbg-view")!.addEventListener("click", (e) => {
    const tr = (e.target as HTMLElement).closest("tr[data-cbg]");
    if (tr) void controller.selectTarget(tr.getAttribute("data-cbg")!);
  });

  const attrInput = document.getElementById("attribute") as HTMLInputElement;
  const wminInput = document.getElementById("wmin") as HTMLInputElement;
  document.getElementById("detect")!.addEventListener("click", () => {
    void controller.boot(attrInput.value || "income", Number(wminInput.value || 0));
  });

  controller.renderAll();
}

void start();
