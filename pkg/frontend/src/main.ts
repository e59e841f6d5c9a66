// Browser bootstrap: one session, one rendering pass per state change.

import { ConsoleSession } from "./gateway.js";
import {
  renderAnomalyStrip,
  renderApprovalPanel,
  renderFaultPanel,
  renderInjectPanel,
  renderNotices,
  renderPlanTree,
  renderSchedule,
  renderStatusBanner,
  renderTelemetryBoard,
} from "./render.js";
import type { ConsoleState } from "./state.js";

function mount(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing mount point #${id}`);
  }
  return el;
}

const params = new URLSearchParams(window.location.search);
const address = params.get("gateway") ?? "http://127.0.0.1:8080";

const banner = mount("status-banner");
const board = mount("telemetry-board");
const schedule = mount("schedule-panel");
const plan = mount("plan-panel");
const fault = mount("fault-panel");
const approval = mount("approval-panel");
const anomaly = mount("anomaly-strip");
const inject = mount("inject-panel");
const notices = mount("notices");

let renderQueued = false;

function render(state: ConsoleState): void {
  if (renderQueued) {
    return;
  }
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    banner.innerHTML = renderStatusBanner(state);
    board.innerHTML = renderTelemetryBoard(state);
    schedule.innerHTML = renderSchedule(state.snapshot);
    plan.innerHTML = renderPlanTree(state.snapshot);
    fault.innerHTML = renderFaultPanel(state);
    approval.innerHTML = renderApprovalPanel(state);
    anomaly.innerHTML = renderAnomalyStrip(state.anomalyStrip);
    const select = document.getElementById("fault-select") as HTMLSelectElement | null;
    const keep = select?.value;
    inject.innerHTML = renderInjectPanel(state);
    if (keep) {
      const fresh = document.getElementById("fault-select") as HTMLSelectElement | null;
      if (fresh) {
        fresh.value = keep;
      }
    }
    notices.innerHTML = renderNotices(state);
  });
}

const session = new ConsoleSession(address, { onChange: render });
void session.connect();

// User actions are delegated so re-rendered panels keep working.
document.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  if (target.id === "inject-btn") {
    const select = document.getElementById("fault-select") as HTMLSelectElement | null;
    if (select?.value) {
      void session.injectFault(select.value);
    }
  }
  const decision = target.dataset?.decision;
  const planId = target.dataset?.plan;
  if (planId && (decision === "approve" || decision === "hold")) {
    void session.decidePlan(planId, decision);
  }
});
