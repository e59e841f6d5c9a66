// Gateway payload shapes. Field names mirror the server's domain types.

export interface FaultPanelData {
  modes: string[];
  exact: boolean;
  cycle: number;
  multi_fault_diagnoses: string[][];
}

export interface ImpactData {
  failed: string[];
  lost: [string, string][]; // [component, function]
  zft: [string, string][]; // [function, consumer]
  redundancy: Record<string, number>; // "function@consumer" -> paths left
}

export interface PendingApprovalData {
  plan_id: string;
  reason: string;
  proposed_at_s: number;
  node_count: number;
  mode_changes: number;
}

export interface ScheduleData {
  load_ids: string[];
  modes: Record<string, number[]>;
  slot_s: number;
  objective_value: number;
  mode_changes: number;
}

export interface StateSnapshot {
  cycle: number;
  sim_time_s: number;
  values: Record<string, number>;
  staleness: Record<string, boolean>;
  node_states: Record<string, string>;
  plan_id: string;
  active_faults: FaultPanelData | null;
  impacts: ImpactData | null;
  pending_approval: PendingApprovalData | null;
  schedule: ScheduleData | null;
  fault_catalog: string[];
  amendments: string[];
  counters: Record<string, number>;
}

export interface CycleEvent {
  type: "cycle";
  cycle: number;
  sim_time_s: number;
  replan: string;
  plan_id: string;
  commands: number;
  soc_wh: number | null;
  net_w: number | null;
  anomaly?: string;
  anomaly_distance?: number;
}

export interface FaultEvent {
  type: "fault";
  cycle: number;
  modes: string[];
  exact: boolean;
  impacts: ImpactData | null;
}

export interface PlanEvent {
  type: "plan";
  cycle: number;
  reason: string;
  committed: boolean;
  plan_id: string;
  pending: PendingApprovalData | null;
}

export type StreamEvent = CycleEvent | FaultEvent | PlanEvent | { type: string; [k: string]: unknown };

export type ConnectionState = "connecting" | "live" | "retrying" | "closed";
