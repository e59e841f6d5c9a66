// Console session: connection lifecycle and the two permitted actions.
//
// The console issues exactly GET /state, GET /events, POST /inject, and
// POST /approve. Everything rendered traces back to those payloads.

import { subscribeSse, type SseHandle } from "./sse.js";
import {
  addNotice,
  applyEvent,
  applySnapshot,
  initialState,
  setConnection,
  type ConsoleState,
} from "./state.js";
import type { StateSnapshot, StreamEvent } from "./types.js";

const RETRY_DELAY_MS = 2000;
const SNAPSHOT_POLL_MS = 1000;

export interface SessionOptions {
  onChange?: (state: ConsoleState) => void;
  now?: () => number;
  retryDelayMs?: number;
  pollMs?: number;
}

export class ConsoleSession {
  readonly state: ConsoleState;
  private stream: SseHandle | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly onChange: (state: ConsoleState) => void;
  private readonly now: () => number;
  private readonly retryDelayMs: number;
  private readonly pollMs: number;
  private closed = false;

  constructor(address: string, options: SessionOptions = {}) {
    this.state = initialState(address.replace(/\/+$/, ""));
    this.onChange = options.onChange ?? (() => undefined);
    this.now = options.now ?? (() => Date.now());
    this.retryDelayMs = options.retryDelayMs ?? RETRY_DELAY_MS;
    this.pollMs = options.pollMs ?? SNAPSHOT_POLL_MS;
  }

  async connect(): Promise<void> {
    setConnection(this.state, "connecting");
    this.notify();
    try {
      await this.refreshSnapshot();
    } catch (err) {
      this.scheduleRetry(`gateway unreachable: ${String(err)}`);
      return;
    }
    this.openStream();
    setConnection(this.state, "live");
    this.notify();
    if (this.pollMs > 0) {
      this.pollTimer = setInterval(() => {
        this.refreshSnapshot().catch(() => {
          // a missed poll is fine while the stream is alive
        });
      }, this.pollMs);
    }
  }

  close(): void {
    this.closed = true;
    this.stream?.close();
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
    }
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
    }
    setConnection(this.state, "closed");
    this.notify();
  }

  async refreshSnapshot(): Promise<void> {
    const response = await fetch(`${this.state.gatewayAddress}/state`);
    if (!response.ok) {
      throw new Error(`HTTP ${response.status}`);
    }
    applySnapshot(this.state, (await response.json()) as StateSnapshot);
    this.notify();
  }

  handleEvent(event: StreamEvent): void {
    applyEvent(this.state, event, this.now());
    this.notify();
  }

  /** POST /inject; gateway errors are surfaced verbatim as notices. */
  async injectFault(faultModeId: string): Promise<boolean> {
    const response = await fetch(`${this.state.gatewayAddress}/inject`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ fault_mode_id: faultModeId }),
    });
    const body = (await response.json()) as { status?: string; error?: string };
    if (!response.ok) {
      addNotice(this.state, `inject ${faultModeId}: HTTP ${response.status} ${body.error ?? ""}`);
      this.notify();
      return false;
    }
    addNotice(this.state, `inject ${faultModeId}: ${body.status ?? "accepted"}`);
    this.notify();
    return true;
  }

  /** POST /approve with decision approve|hold; conflicts surfaced verbatim. */
  async decidePlan(planId: string, decision: "approve" | "hold"): Promise<boolean> {
    const response = await fetch(`${this.state.gatewayAddress}/approve`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ plan_id: planId, decision }),
    });
    const body = (await response.json()) as { status?: string; error?: string };
    if (!response.ok) {
      addNotice(this.state, `${decision} ${planId}: HTTP ${response.status} ${body.error ?? ""}`);
      this.notify();
      return false;
    }
    addNotice(this.state, `${decision} ${planId}: acknowledged`);
    this.notify();
    return true;
  }

  private openStream(): void {
    this.stream = subscribeSse(
      `${this.state.gatewayAddress}/events`,
      (data) => this.handleEvent(data as StreamEvent),
      () => this.scheduleRetry("event stream lost"),
    );
  }

  private scheduleRetry(reason: string): void {
    if (this.closed) {
      return;
    }
    addNotice(this.state, reason);
    setConnection(this.state, "retrying");
    this.notify();
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
    this.retryTimer = setTimeout(() => {
      this.connect().catch(() => undefined);
    }, this.retryDelayMs);
  }

  private notify(): void {
    this.onChange(this.state);
  }
}
