// Console session state: the single store every panel renders from.
// All content comes from gateway payloads; the store only accumulates and
// never computes new engineering values.

import type {
  ConnectionState,
  CycleEvent,
  FaultEvent,
  FaultPanelData,
  ImpactData,
  PlanEvent,
  StateSnapshot,
  StreamEvent,
} from "./types.js";

export const HISTORY_LIMIT = 240;
const NOTICE_LIMIT = 8;

export interface TrendPoint {
  cycle: number;
  value: number;
}

export interface AnomalyPoint {
  cycle: number;
  verdict: string;
  distance: number;
}

export interface ConsoleState {
  connection: ConnectionState;
  gatewayAddress: string;
  snapshot: StateSnapshot | null;
  faultPanel: FaultPanelData | null;
  impacts: ImpactData | null;
  lastPlanEvent: PlanEvent | null;
  socTrend: TrendPoint[];
  netTrend: TrendPoint[];
  anomalyStrip: AnomalyPoint[];
  notices: string[];
  lastFaultEventAt: number | null; // wall-clock ms when the fault event landed
}

export function initialState(address: string): ConsoleState {
  return {
    connection: "connecting",
    gatewayAddress: address,
    snapshot: null,
    faultPanel: null,
    impacts: null,
    lastPlanEvent: null,
    socTrend: [],
    netTrend: [],
    anomalyStrip: [],
    notices: [],
    lastFaultEventAt: null,
  };
}

function push<T>(series: T[], point: T, limit: number): void {
  series.push(point);
  if (series.length > limit) {
    series.splice(0, series.length - limit);
  }
}

export function setConnection(state: ConsoleState, connection: ConnectionState): void {
  state.connection = connection;
}

export function applySnapshot(state: ConsoleState, snapshot: StateSnapshot): void {
  state.snapshot = snapshot;
  // The snapshot is authoritative when (re)connecting mid-fault.
  if (snapshot.active_faults) {
    state.faultPanel = snapshot.active_faults;
  }
  if (snapshot.impacts) {
    state.impacts = snapshot.impacts;
  }
}

export function applyEvent(state: ConsoleState, event: StreamEvent, nowMs: number): void {
  if (event.type === "cycle") {
    const cycle = event as CycleEvent;
    if (typeof cycle.soc_wh === "number") {
      push(state.socTrend, { cycle: cycle.cycle, value: cycle.soc_wh }, HISTORY_LIMIT);
    }
    if (typeof cycle.net_w === "number") {
      push(state.netTrend, { cycle: cycle.cycle, value: cycle.net_w }, HISTORY_LIMIT);
    }
    if (cycle.anomaly !== undefined) {
      push(
        state.anomalyStrip,
        {
          cycle: cycle.cycle,
          verdict: cycle.anomaly,
          distance: cycle.anomaly_distance ?? 0,
        },
        HISTORY_LIMIT,
      );
    }
  } else if (event.type === "fault") {
    const fault = event as FaultEvent;
    state.faultPanel = {
      modes: fault.modes,
      exact: fault.exact,
      cycle: fault.cycle,
      multi_fault_diagnoses: [],
    };
    if (fault.impacts) {
      state.impacts = fault.impacts;
    }
    state.lastFaultEventAt = nowMs;
  } else if (event.type === "plan") {
    state.lastPlanEvent = event as PlanEvent;
  } else if (event.type === "operator_error") {
    addNotice(state, `operator action failed: ${(event as { error?: string }).error ?? "?"}`);
  }
}

export function addNotice(state: ConsoleState, text: string): void {
  push(state.notices, text, NOTICE_LIMIT);
}
