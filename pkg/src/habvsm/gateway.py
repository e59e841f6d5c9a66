"""Operator gateway: read-only state snapshots plus fault injection and
replan approval over HTTP, with a server-sent event stream.

Endpoints:
  GET  /state    latest frame values, node states, active faults, pending approval
  GET  /metrics  mission counters
  POST /inject   {"fault_mode_id": ...}
  POST /approve  {"plan_id": ..., "decision": "approve"|"hold"}
  GET  /events   text/event-stream of cycle summaries, fault/anomaly/plan events

The run loop stays the single writer; the gateway serves immutable snapshot
dictionaries and enqueues operator actions for the next cycle boundary.
Every request is appended to access.log for auditability.
"""

from __future__ import annotations

import json
import os
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .orchestrator import OperatorAction


class Gateway:
    def __init__(self, runner, port: int = 0):
        self.runner = runner
        self.access_log_path = os.path.join(runner.out_dir, "access.log")
        self._access_lock = threading.Lock()
        handler = self._make_handler()
        self.server = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.port = self.server.server_address[1]
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        runner.attach_operator()

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def _log_access(self, method: str, path: str, status: int) -> None:
        with self._access_lock:
            with open(self.access_log_path, "a", encoding="utf-8") as fh:
                fh.write(f"{method} {path} {status}\n")

    def _make_handler(self):
        gateway = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass  # access.log replaces stderr chatter

            def _send_json(self, status: int, payload: dict):
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)
                gateway._log_access(self.command, self.path, status)

            def do_GET(self):
                if self.path == "/state":
                    self._send_json(200, gateway.runner.snapshot or {"cycle": 0})
                elif self.path == "/metrics":
                    ledger = gateway.runner.vsm.ledger
                    self._send_json(200, {k: getattr(ledger, k) for k in vars(ledger)})
                elif self.path == "/events":
                    self._serve_events()
                else:
                    self._send_json(404, {"error": f"unknown path {self.path}"})

            def _serve_events(self):
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                gateway._log_access("GET", "/events", 200)
                sink: "queue.Queue[dict]" = queue.Queue(maxsize=1000)
                gateway.runner.event_sinks.append(sink)
                try:
                    while True:
                        try:
                            event = sink.get(timeout=5.0)
                        except queue.Empty:
                            self.wfile.write(b": keepalive\n\n")
                            self.wfile.flush()
                            continue
                        data = json.dumps(event)
                        self.wfile.write(f"data: {data}\n\n".encode())
                        self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError, OSError):
                    pass
                finally:
                    if sink in gateway.runner.event_sinks:
                        gateway.runner.event_sinks.remove(sink)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self._send_json(400, {"error": "invalid JSON body"})
                    return
                if self.path == "/inject":
                    fault_id = payload.get("fault_mode_id")
                    catalog = set(
                        (gateway.runner.snapshot or {}).get("fault_catalog")
                        or gateway.runner.scenario.sim_model.fault_mode_ids()
                    )
                    if fault_id not in catalog:
                        self._send_json(404, {"error": f"unknown fault_mode_id {fault_id!r}"})
                        return
                    active = fault_id in gateway.runner.sim.active_faults
                    gateway.runner.submit_action(
                        OperatorAction("inject", {"fault_mode_id": fault_id,
                                                  "parameters": payload.get("parameters", {})})
                    )
                    self._send_json(
                        202,
                        {"status": "duplicate-noop" if active else "accepted",
                         "fault_mode_id": fault_id},
                    )
                elif self.path == "/approve":
                    plan_id = payload.get("plan_id")
                    decision = payload.get("decision")
                    if decision not in ("approve", "hold"):
                        self._send_json(400, {"error": "decision must be approve or hold"})
                        return
                    pending = (gateway.runner.snapshot or {}).get("pending_approval")
                    if not pending or pending.get("plan_id") != plan_id:
                        self._send_json(
                            409, {"error": f"no pending proposal with plan_id {plan_id!r}"}
                        )
                        return
                    gateway.runner.submit_action(
                        OperatorAction(decision, {"plan_id": plan_id})
                    )
                    self._send_json(200, {"status": decision, "plan_id": plan_id})
                else:
                    self._send_json(404, {"error": f"unknown path {self.path}"})

        return Handler
