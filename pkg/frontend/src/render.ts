// Pure HTML renderers: state in, markup out. No client-side engineering
// computation beyond formatting what the gateway sent.

import type { AnomalyPoint, ConsoleState, TrendPoint } from "./state.js";
import type { ScheduleData, StateSnapshot } from "./types.js";

function esc(text: unknown): string {
  return String(text)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number | null | undefined, digits = 1): string {
  if (value === null || value === undefined || Number.isNaN(value)) {
    return "-";
  }
  return value.toFixed(digits);
}

export function renderStatusBanner(state: ConsoleState): string {
  const cls = { live: "ok", connecting: "warn", retrying: "bad", closed: "bad" }[state.connection];
  const snap = state.snapshot;
  const where = snap ? `cycle ${snap.cycle} · t=${fmt(snap.sim_time_s, 0)} s · ${esc(snap.plan_id)}` : "no data";
  return (
    `<span class="conn ${cls}">${state.connection.toUpperCase()}</span>` +
    `<span class="addr">${esc(state.gatewayAddress)}</span><span class="where">${where}</span>`
  );
}

export function renderSparkline(series: TrendPoint[], width = 220, height = 36): string {
  if (series.length < 2) {
    return `<svg class="spark" width="${width}" height="${height}"></svg>`;
  }
  const values = series.map((p) => p.value);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const step = width / (series.length - 1);
  const points = series
    .map((p, i) => `${(i * step).toFixed(1)},${(height - 3 - ((p.value - lo) / span) * (height - 6)).toFixed(1)}`)
    .join(" ");
  return (
    `<svg class="spark" width="${width}" height="${height}">` +
    `<polyline points="${points}" fill="none" stroke="currentColor" stroke-width="1.5"/></svg>`
  );
}

const BOARD_TILES: [string, string, number][] = [
  ["battery.soc_wh", "Battery SoC (Wh)", 1],
  ["battery.soc_pct", "SoC (%)", 1],
  ["solar.output_w", "Solar (W)", 0],
  ["power.net_w", "Net power (W)", 0],
  ["eclipse.flag", "Eclipse", 0],
  ["battery.current_a", "Battery current (A)", 2],
];

export function renderTelemetryBoard(state: ConsoleState): string {
  const snap = state.snapshot;
  if (!snap) {
    return `<p class="empty">waiting for first snapshot</p>`;
  }
  const tiles = BOARD_TILES.map(([param, label, digits]) => {
    const value = snap.values[param];
    const stale = snap.staleness[param] ? " stale" : "";
    return (
      `<div class="tile${stale}"><div class="tile-label">${esc(label)}</div>` +
      `<div class="tile-value">${fmt(value, digits)}</div></div>`
    );
  }).join("");
  const loads = Object.keys(snap.values)
    .filter((p) => p.endsWith(".power_w") && !p.startsWith("solar"))
    .sort()
    .map((p) => {
      const lid = p.split(".")[0];
      const stale = snap.staleness[p] ? " stale" : "";
      return (
        `<div class="tile small${stale}"><div class="tile-label">${esc(lid)}</div>` +
        `<div class="tile-value">${fmt(snap.values[p], 0)} W</div></div>`
      );
    })
    .join("");
  return (
    `<div class="tiles">${tiles}</div>` +
    `<div class="trends"><div><span class="trend-label">SoC</span>${renderSparkline(state.socTrend)}</div>` +
    `<div><span class="trend-label">Net W</span>${renderSparkline(state.netTrend)}</div></div>` +
    `<div class="tiles loads">${loads}</div>`
  );
}

export function renderSchedule(snapshot: StateSnapshot | null): string {
  const schedule: ScheduleData | null = snapshot?.schedule ?? null;
  if (!snapshot || !schedule) {
    return `<p class="empty">no committed schedule</p>`;
  }
  const slots = schedule.modes[schedule.load_ids[0]]?.length ?? 0;
  const currentSlot = Math.floor(snapshot.sim_time_s / schedule.slot_s);
  const rows = schedule.load_ids
    .map((lid) => {
      const cells = (schedule.modes[lid] ?? [])
        .map((v, t) => {
          const now = t === currentSlot ? " now" : "";
          return `<td class="slot ${v ? "on" : "off"}${now}"></td>`;
        })
        .join("");
      return `<tr><th>${esc(lid)}</th>${cells}</tr>`;
    })
    .join("");
  return (
    `<p class="meta">${slots} slots x ${schedule.slot_s} s · objective ${fmt(schedule.objective_value, 1)} ` +
    `· ${schedule.mode_changes} mode changes</p>` +
    `<div class="gantt-wrap"><table class="gantt">${rows}</table></div>`
  );
}

export function renderPlanTree(snapshot: StateSnapshot | null): string {
  if (!snapshot || Object.keys(snapshot.node_states).length === 0) {
    return `<p class="empty">no plan loaded</p>`;
  }
  const states = snapshot.node_states;
  const ids = Object.keys(states);
  const root = ids.find((id) => id === "plan_root") ?? ids[0];
  const groups = ids.filter((id) => id.startsWith("grp_"));
  const under = (group: string) =>
    ids.filter((id) => id.slice(4).startsWith(group.slice(4)) && (id.startsWith("cmd_") || id.startsWith("vfy_")));
  const leaf = (id: string) =>
    `<li class="node st-${states[id].toLowerCase()}"><code>${esc(id)}</code> ${states[id]}</li>`;
  const groupHtml = groups
    .map(
      (g) =>
        `<li class="node st-${states[g].toLowerCase()}"><code>${esc(g)}</code> ${states[g]}` +
        `<ul>${under(g).map(leaf).join("")}</ul></li>`,
    )
    .join("");
  const extras = ids
    .filter((id) => !id.startsWith("grp_") && !id.startsWith("cmd_") && !id.startsWith("vfy_") && id !== root)
    .map(leaf)
    .join("");
  return (
    `<ul class="plan-tree"><li class="node st-${states[root].toLowerCase()}">` +
    `<code>${esc(root)}</code> ${states[root]}<ul>${groupHtml}${extras}</ul></li></ul>`
  );
}

export function renderFaultPanel(state: ConsoleState): string {
  const panel = state.faultPanel;
  if (!panel) {
    return `<p class="empty nominal-board">no active faults</p>`;
  }
  const modes = panel.modes
    .map((m) => `<li class="fault-mode">${esc(m)}</li>`)
    .join("");
  const kind = panel.exact
    ? "isolated failure"
    : panel.multi_fault_diagnoses.length > 0
      ? "multi-fault diagnoses"
      : "ambiguity group";
  const multi = panel.multi_fault_diagnoses.length
    ? `<p class="meta">minimal diagnoses: ${panel.multi_fault_diagnoses
        .map((d) => esc(d.join(" + ")))
        .join(" | ")}</p>`
    : "";
  let impacts = "";
  if (state.impacts) {
    const lost = state.impacts.lost
      .map(([component, fn]) => `<li>${esc(component)} lost ${esc(fn)}</li>`)
      .join("");
    const zft = state.impacts.zft
      .map(([fn, consumer]) => `<li class="zft">${esc(fn)} @ ${esc(consumer)} is zero-fault tolerant</li>`)
      .join("");
    const redundancy = Object.entries(state.impacts.redundancy)
      .map(([key, n]) => `<li>${esc(key)}: ${n} path${n === 1 ? "" : "s"} left</li>`)
      .join("");
    impacts =
      `<h3>Impacts (failed: ${state.impacts.failed.map(esc).join(", ") || "none"})</h3>` +
      `<ul class="impact-list">${lost || "<li>no functions lost</li>"}</ul>` +
      `<h3>Zero-fault tolerance</h3><ul class="zft-list">${zft || "<li>none</li>"}</ul>` +
      `<h3>Redundancy</h3><ul class="red-list">${redundancy}</ul>`;
  }
  const amendments = state.snapshot?.amendments?.length
    ? `<h3>Plan amendments</h3><ul>${state.snapshot.amendments.map((a) => `<li>${esc(a)}</li>`).join("")}</ul>`
    : "";
  return (
    `<p class="meta">${kind} · confirmed cycle ${panel.cycle}</p>` +
    `<ul class="fault-modes">${modes}</ul>${multi}${impacts}${amendments}`
  );
}

export function renderApprovalPanel(state: ConsoleState): string {
  const pending = state.snapshot?.pending_approval ?? null;
  if (!pending) {
    const last = state.lastPlanEvent;
    if (last) {
      return (
        `<p class="meta">last plan: ${esc(last.plan_id)} (${esc(last.reason)}) ` +
        `${last.committed ? "committed" : "proposed"} at cycle ${last.cycle}</p>`
      );
    }
    return `<p class="empty">no pending proposal</p>`;
  }
  return (
    `<p class="proposal">Proposed <b>${esc(pending.plan_id)}</b> (${esc(pending.reason)}): ` +
    `${pending.node_count} nodes, ${pending.mode_changes} mode changes, ` +
    `proposed at t=${fmt(pending.proposed_at_s, 0)} s</p>` +
    `<button class="approve" data-plan="${esc(pending.plan_id)}" data-decision="approve">Approve</button>` +
    `<button class="hold" data-plan="${esc(pending.plan_id)}" data-decision="hold">Hold</button>`
  );
}

export function renderAnomalyStrip(points: AnomalyPoint[]): string {
  if (!points.length) {
    return `<p class="empty">no anomaly scores yet</p>`;
  }
  const recent = points.slice(-120);
  const cells = recent
    .map(
      (p) =>
        `<span class="a-cell ${p.verdict === "ANOMALY" ? "anom" : "nom"}" ` +
        `title="cycle ${p.cycle}: ${p.verdict} d=${p.distance.toFixed(3)}"></span>`,
    )
    .join("");
  const anomalies = recent.filter((p) => p.verdict === "ANOMALY").length;
  return `<p class="meta">${anomalies} anomalous of last ${recent.length} frames</p><div class="strip">${cells}</div>`;
}

export function renderInjectPanel(state: ConsoleState): string {
  const catalog = state.snapshot?.fault_catalog ?? [];
  if (!catalog.length) {
    return `<p class="empty">fault catalog unavailable</p>`;
  }
  const options = catalog.map((f) => `<option value="${esc(f)}">${esc(f)}</option>`).join("");
  return (
    `<select id="fault-select">${options}</select>` +
    `<button id="inject-btn">Inject fault</button>`
  );
}

export function renderNotices(state: ConsoleState): string {
  if (!state.notices.length) {
    return "";
  }
  return `<ul class="notices">${state.notices
    .slice()
    .reverse()
    .map((n) => `<li>${esc(n)}</li>`)
    .join("")}</ul>`;
}
