"""Discrete-time habitat power simulation with scriptable fault injection.

Models solar generation with eclipse windows, an ideal clamped battery
integrator, switched distribution buses, commandable loads, and a sensor
layer that publishes a complete frame of monitored parameters each step.
The sensor layer also computes expectation residuals (measured minus
expected for the commanded configuration) so that downstream limit tests
stay simple closed-interval bounds.

Fault effects: stuck_on, stuck_off, degraded_draw, sensor bias, sensor
stale, and bus trip. Physics is fully deterministic given the command and
injection sequence; the seeded RNG perturbs sensor readings only.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

ON = "ON"
OFF = "OFF"
CLOSED = "CLOSED"
OPEN = "OPEN"
NOMINAL = "NOMINAL"

BUS_NOMINAL_VOLTAGE = 28.0
BUS_ALIVE_THRESHOLD_V = 14.0

# Default effect magnitudes, overridable per injection.
DEFAULT_DEGRADED_MULTIPLIER = 1.6
DEFAULT_POWER_BIAS_FRACTION = 0.5
DEFAULT_BUS_VOLTAGE_BIAS = 2.0


class SimulationError(Exception):
    pass


class ModelFileError(Exception):
    def __init__(self, message: str, path: str = "", line: int = 0):
        loc = f"{path}:{line}: " if path else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


@dataclass
class Load:
    id: str
    bus_id: str
    power_draw_w: float
    mode: str = OFF
    health: str = NOMINAL

    def __post_init__(self):
        if self.power_draw_w <= 0:
            raise SimulationError(f"load {self.id}: power_draw_w must be > 0")


@dataclass
class BusLine:
    id: str
    capacity_w: float
    switch_state: str = CLOSED

    def __post_init__(self):
        if self.capacity_w <= 0:
            raise SimulationError(f"bus {self.id}: capacity_w must be > 0")


@dataclass
class AuxSensor:
    """Generic synthetic sensor (life support, thermal, avionics blocks).

    value(t) = nominal + amplitude * sin(2*pi*t/period + phase) + noise
    """

    id: str
    nominal: float
    amplitude: float
    period_s: float
    phase: float
    noise_sigma: float
    band_halfwidth: float  # nominal operating band used by limit tests
    fault_bias: float  # bias magnitude applied by the matching bias fault


@dataclass
class PowerSystem:
    solar_output_w: float
    battery_capacity_wh: float
    battery_soc_wh: float
    buses: list[BusLine]
    eclipse_windows: list[tuple[float, float]]
    max_discharge_w: float = 0.0
    reserve_wh: float = 0.0

    def __post_init__(self):
        if not 0 <= self.battery_soc_wh <= self.battery_capacity_wh:
            raise SimulationError("battery_soc_wh outside [0, capacity]")
        prev_end = -math.inf
        for start, end in self.eclipse_windows:
            if start >= end:
                raise SimulationError(f"eclipse window [{start}, {end}) is empty")
            if start < prev_end:
                raise SimulationError("eclipse windows must be disjoint and sorted")
            prev_end = end

    def in_eclipse(self, t_s: float) -> bool:
        return any(start <= t_s < end for start, end in self.eclipse_windows)


@dataclass(frozen=True)
class SensorFrame:
    cycle: int
    sim_time_s: float
    values: dict[str, float]
    staleness: dict[str, bool]
    rejected_commands: tuple[str, ...] = ()


@dataclass(frozen=True)
class FaultInjection:
    fault_mode_id: str
    at_time_s: float
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Command:
    kind: str  # set_load | set_bus_switch
    target: str
    value: str  # ON/OFF or CLOSED/OPEN


@dataclass(frozen=True)
class PowerSummary:
    generation_w: float
    total_load_w: float
    net_w: float
    soc_wh: float


@dataclass
class SimModel:
    """Static scenario model: loads, power system sizing, aux sensor defs."""

    loads: list[Load]
    power: PowerSystem
    aux_sensors: list[AuxSensor]
    injections: list[FaultInjection]
    load_noise_sigma_w: float = 0.5
    bus_noise_sigma_v: float = 0.02

    def parameter_ids(self) -> list[str]:
        """Full monitored-parameter dictionary, in frame emission order."""
        params: list[str] = []
        for load in self.loads:
            params += [
                f"{load.id}.power_w",
                f"{load.id}.mode",
                f"{load.id}.cmd_ack",
                f"{load.id}.power_residual_w",
                f"{load.id}.mode_residual",
                f"{load.id}.consistency_w",
            ]
        for bus in self.power.buses:
            params += [
                f"{bus.id}.voltage_v",
                f"{bus.id}.current_a",
                f"{bus.id}.switch",
                f"{bus.id}.switch_residual",
            ]
        params += [
            "solar.output_w",
            "battery.soc_wh",
            "battery.soc_pct",
            "battery.current_a",
            "battery.voltage_v",
            "power.net_w",
            "eclipse.flag",
        ]
        params += [s.id for s in self.aux_sensors]
        return params

    def fault_mode_ids(self) -> list[str]:
        """Every fault mode this model can physically realize."""
        modes: list[str] = []
        for load in self.loads:
            modes += [
                f"{load.id}.stuck_on",
                f"{load.id}.stuck_off",
                f"{load.id}.degraded_draw",
                f"{load.id}.power_bias",
            ]
        for bus in self.power.buses:
            modes += [f"{bus.id}.trip", f"{bus.id}.v_bias"]
        for sensor in self.aux_sensors:
            if sensor.fault_bias != 0.0:
                modes += [f"{sensor.id}.bias"]
        return modes


@dataclass
class ActiveFault:
    fault_mode_id: str
    effect: str  # stuck_on|stuck_off|degraded_draw|power_bias|trip|v_bias|bias|stale
    target: str
    magnitude: float = 0.0


class SimState:
    """Mutable simulation state, exclusively owned by the stepping driver."""

    def __init__(self, model: SimModel, seed: int = 0):
        self.model = model
        self.loads: dict[str, Load] = {l.id: replace(l) for l in model.loads}
        self.buses: dict[str, BusLine] = {b.id: replace(b) for b in model.power.buses}
        self.commanded_mode: dict[str, str] = {l.id: l.mode for l in model.loads}
        self.commanded_switch: dict[str, str] = {b.id: b.switch_state for b in model.power.buses}
        self.soc_wh = model.power.battery_soc_wh
        self.sim_time_s = 0.0
        self.cycle = 0
        self.active_faults: dict[str, ActiveFault] = {}
        self.pending_injections: list[FaultInjection] = sorted(
            model.injections, key=lambda f: (f.at_time_s, f.fault_mode_id)
        )
        self.clamp_loss_wh = 0.0  # energy discarded by soc clamping, for conservation checks
        self.warnings: list[str] = []
        self._rng = random.Random(seed)
        self._known_faults = set(model.fault_mode_ids()) | {
            f"{s.id}.stale" for s in model.aux_sensors
        }

    # -- fault handling -------------------------------------------------

    def inject_fault(self, injection: FaultInjection) -> None:
        fid = injection.fault_mode_id
        if fid not in self._known_faults:
            raise SimulationError(f"unknown fault mode {fid!r}")
        if fid in self.active_faults:
            self.warnings.append(f"duplicate injection of active fault {fid!r} ignored")
            return
        target, _, effect = fid.rpartition(".")
        params = injection.parameters
        if effect == "degraded_draw":
            magnitude = float(params.get("multiplier", DEFAULT_DEGRADED_MULTIPLIER))
        elif effect == "power_bias":
            draw = self.loads[target].power_draw_w
            magnitude = float(params.get("bias", DEFAULT_POWER_BIAS_FRACTION * draw))
        elif effect == "v_bias":
            magnitude = float(params.get("bias", DEFAULT_BUS_VOLTAGE_BIAS))
        elif effect == "bias":
            sensor = next(s for s in self.model.aux_sensors if s.id == target)
            magnitude = float(params.get("bias", sensor.fault_bias))
        else:
            magnitude = 0.0
        self.active_faults[fid] = ActiveFault(fid, effect, target, magnitude)
        if effect == "trip":
            self.buses[target].switch_state = OPEN
        elif effect == "stuck_on":
            self.loads[target].mode = ON
            self.loads[target].health = fid
        elif effect == "stuck_off":
            self.loads[target].mode = OFF
            self.loads[target].health = fid
        elif effect in ("degraded_draw", "power_bias"):
            self.loads[target].health = fid

    def _fault(self, fid: str) -> ActiveFault | None:
        return self.active_faults.get(fid)

    # -- physics --------------------------------------------------------

    def bus_alive(self, bus_id: str) -> bool:
        return self.buses[bus_id].switch_state == CLOSED

    def true_draw_w(self, load: Load) -> float:
        """Actual electrical draw, accounting for faults and bus state."""
        if not self.bus_alive(load.bus_id):
            return 0.0
        if load.mode != ON:
            return 0.0
        fault = self._fault(f"{load.id}.degraded_draw")
        if fault is not None:
            return load.power_draw_w * fault.magnitude
        return load.power_draw_w

    def solar_w(self, t_s: float | None = None) -> float:
        t = self.sim_time_s if t_s is None else t_s
        return 0.0 if self.model.power.in_eclipse(t) else self.model.power.solar_output_w

    def power_balance(self) -> PowerSummary:
        total = sum(self.true_draw_w(l) for l in self.loads.values())
        gen = self.solar_w()
        return PowerSummary(gen, total, gen - total, self.soc_wh)

    # -- stepping ---------------------------------------------------------

    def step(
        self,
        dt: float,
        commands: list[Command] | None = None,
        injections: list[FaultInjection] | None = None,
    ) -> SensorFrame:
        """Advance one step: commands, due injections, physics, frame emission."""
        if dt <= 0:
            raise SimulationError("dt must be > 0")
        rejected: list[str] = []
        for cmd in commands or []:
            if not self._apply_command(cmd):
                rejected.append(f"{cmd.kind}:{cmd.target}={cmd.value}")

        new_time = self.sim_time_s + dt
        for inj in injections or []:
            self.pending_injections.append(inj)
        self.pending_injections.sort(key=lambda f: (f.at_time_s, f.fault_mode_id))
        while self.pending_injections and self.pending_injections[0].at_time_s <= new_time:
            self.inject_fault(self.pending_injections.pop(0))

        total_draw = sum(self.true_draw_w(l) for l in self.loads.values())
        net_w = self.solar_w(new_time) - total_draw
        unclamped = self.soc_wh + net_w * dt / 3600.0
        clamped = min(max(unclamped, 0.0), self.model.power.battery_capacity_wh)
        self.clamp_loss_wh += unclamped - clamped
        self.soc_wh = clamped
        self.sim_time_s = new_time
        self.cycle += 1
        return self._emit_frame(total_draw, net_w, rejected)

    def _apply_command(self, cmd: Command) -> bool:
        if cmd.kind == "set_load":
            load = self.loads.get(cmd.target)
            if load is None or cmd.value not in (ON, OFF):
                return False
            self.commanded_mode[cmd.target] = cmd.value
            stuck = load.health.endswith("stuck_on") or load.health.endswith("stuck_off")
            if not stuck:
                load.mode = cmd.value
            return True
        if cmd.kind == "set_bus_switch":
            bus = self.buses.get(cmd.target)
            if bus is None or cmd.value not in (CLOSED, OPEN):
                return False
            self.commanded_switch[cmd.target] = cmd.value
            if f"{cmd.target}.trip" not in self.active_faults:
                bus.switch_state = cmd.value
            return True
        return False

    # -- sensor layer -----------------------------------------------------

    def _noise(self, sigma: float) -> float:
        return self._rng.gauss(0.0, sigma) if sigma > 0 else 0.0

    def _emit_frame(self, total_draw: float, net_w: float, rejected: list[str]) -> SensorFrame:
        values: dict[str, float] = {}
        stale: dict[str, bool] = {}
        t = self.sim_time_s
        sigma_p = self.model.load_noise_sigma_w
        sigma_v = self.model.bus_noise_sigma_v

        for load in self.loads.values():
            true_p = self.true_draw_w(load)
            bias_fault = self._fault(f"{load.id}.power_bias")
            measured_p = true_p + (bias_fault.magnitude if bias_fault else 0.0) + self._noise(sigma_p)
            # Independent current sensor; exposed only through the consistency check.
            measured_i = true_p / BUS_NOMINAL_VOLTAGE + self._noise(sigma_p / BUS_NOMINAL_VOLTAGE)
            cmd_code = 1.0 if self.commanded_mode[load.id] == ON else 0.0
            mode_code = 1.0 if load.mode == ON else 0.0
            bus_v_measured = self._bus_voltage(load.bus_id)
            bus_alive_measured = bus_v_measured > BUS_ALIVE_THRESHOLD_V
            expected_p = load.power_draw_w * cmd_code if bus_alive_measured else 0.0
            values[f"{load.id}.power_w"] = measured_p
            values[f"{load.id}.mode"] = mode_code
            values[f"{load.id}.cmd_ack"] = cmd_code
            values[f"{load.id}.power_residual_w"] = measured_p - expected_p
            values[f"{load.id}.mode_residual"] = mode_code - cmd_code
            values[f"{load.id}.consistency_w"] = abs(measured_p - measured_i * BUS_NOMINAL_VOLTAGE)
            # A dead bus powers none of the load instrumentation: those
            # readings go stale rather than pretending to exonerate anything.
            if not self.bus_alive(load.bus_id):
                for suffix in ("power_w", "mode", "power_residual_w",
                               "mode_residual", "consistency_w"):
                    stale[f"{load.id}.{suffix}"] = True

        for bus in self.buses.values():
            v_bias = self._fault(f"{bus.id}.v_bias")
            true_v = BUS_NOMINAL_VOLTAGE if bus.switch_state == CLOSED else 0.0
            measured_v = true_v + (v_bias.magnitude if v_bias else 0.0) + self._noise(sigma_v)
            bus_draw = sum(
                self.true_draw_w(l) for l in self.loads.values() if l.bus_id == bus.id
            )
            switch_code = 1.0 if bus.switch_state == CLOSED else 0.0
            commanded_code = 1.0 if self.commanded_switch[bus.id] == CLOSED else 0.0
            values[f"{bus.id}.voltage_v"] = measured_v
            values[f"{bus.id}.current_a"] = bus_draw / BUS_NOMINAL_VOLTAGE + self._noise(sigma_v)
            values[f"{bus.id}.switch"] = switch_code
            values[f"{bus.id}.switch_residual"] = switch_code - commanded_code

        cap = self.model.power.battery_capacity_wh
        values["solar.output_w"] = self.solar_w()
        values["battery.soc_wh"] = self.soc_wh
        values["battery.soc_pct"] = 100.0 * self.soc_wh / cap if cap > 0 else 0.0
        values["battery.current_a"] = -net_w / BUS_NOMINAL_VOLTAGE
        values["battery.voltage_v"] = BUS_NOMINAL_VOLTAGE + self._noise(sigma_v)
        values["power.net_w"] = net_w
        values["eclipse.flag"] = 1.0 if self.model.power.in_eclipse(t) else 0.0

        for sensor in self.model.aux_sensors:
            base = sensor.nominal
            if sensor.amplitude != 0.0 and sensor.period_s > 0:
                base += sensor.amplitude * math.sin(2 * math.pi * t / sensor.period_s + sensor.phase)
            bias_fault = self._fault(f"{sensor.id}.bias")
            value = base + (bias_fault.magnitude if bias_fault else 0.0) + self._noise(sensor.noise_sigma)
            values[sensor.id] = value
            stale[sensor.id] = self._fault(f"{sensor.id}.stale") is not None

        for pid in values:
            stale.setdefault(pid, False)
        return SensorFrame(self.cycle, t, values, stale, tuple(rejected))

    def _bus_voltage(self, bus_id: str) -> float:
        bus = self.buses[bus_id]
        v = BUS_NOMINAL_VOLTAGE if bus.switch_state == CLOSED else 0.0
        fault = self._fault(f"{bus_id}.v_bias")
        return v + (fault.magnitude if fault else 0.0)


# -- model file parsing ---------------------------------------------------
#
# Structured text with [loads], [power], [eclipse], [sensors], [injections]
# sections. Lines are whitespace-separated fields with key=value options.


def _parse_kv(parts: list[str]) -> dict[str, str]:
    return dict(p.split("=", 1) for p in parts if "=" in p)


def parse_sim_model(text: str, path: str = "") -> SimModel:
    loads: list[Load] = []
    buses: list[BusLine] = []
    eclipse: list[tuple[float, float]] = []
    sensors: list[AuxSensor] = []
    injections: list[FaultInjection] = []
    power_kv: dict[str, float] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("loads", "power", "eclipse", "sensors", "injections"):
                raise ModelFileError(f"unknown section [{section}]", path, lineno)
            continue
        parts = line.split()
        try:
            if section == "loads":
                kv = _parse_kv(parts[1:])
                loads.append(
                    Load(
                        id=parts[0],
                        bus_id=kv["bus_id"],
                        power_draw_w=float(kv["power_draw_w"]),
                        mode=kv.get("mode", OFF),
                    )
                )
            elif section == "power":
                if parts[0] == "bus":
                    kv = _parse_kv(parts[2:])
                    buses.append(BusLine(parts[1], float(kv["capacity_w"])))
                else:
                    key, _, value = line.partition("=")
                    power_kv[key.strip()] = float(value)
            elif section == "eclipse":
                eclipse.append((float(parts[0]), float(parts[1])))
            elif section == "sensors":
                kv = _parse_kv(parts[1:])
                sensors.append(
                    AuxSensor(
                        id=parts[0],
                        nominal=float(kv["nominal"]),
                        amplitude=float(kv.get("amplitude", 0.0)),
                        period_s=float(kv.get("period_s", 0.0)),
                        phase=float(kv.get("phase", 0.0)),
                        noise_sigma=float(kv.get("noise_sigma", 0.0)),
                        band_halfwidth=float(kv["band_halfwidth"]),
                        fault_bias=float(kv.get("fault_bias", 0.0)),
                    )
                )
            elif section == "injections":
                kv = _parse_kv(parts[1:])
                at = float(kv.pop("at"))
                injections.append(
                    FaultInjection(parts[0], at, {k: float(v) for k, v in kv.items()})
                )
            else:
                raise ModelFileError("content before any section header", path, lineno)
        except ModelFileError:
            raise
        except (KeyError, ValueError, IndexError) as exc:
            raise ModelFileError(f"malformed line: {exc}", path, lineno) from exc

    if not loads:
        raise ModelFileError("model defines no loads", path)
    if not buses:
        raise ModelFileError("model defines no buses", path)
    bus_ids = {b.id for b in buses}
    for load in loads:
        if load.bus_id not in bus_ids:
            raise ModelFileError(f"load {load.id} references unknown bus {load.bus_id}", path)
    power = PowerSystem(
        solar_output_w=power_kv.get("solar_output_w", 0.0),
        battery_capacity_wh=power_kv.get("battery_capacity_wh", 0.0),
        battery_soc_wh=power_kv.get("battery_soc_wh", 0.0),
        buses=buses,
        eclipse_windows=eclipse,
        max_discharge_w=power_kv.get("max_discharge_w", 0.0),
        reserve_wh=power_kv.get("reserve_wh", 0.0),
    )
    model = SimModel(loads=loads, power=power, aux_sensors=sensors, injections=injections)
    known = set(model.fault_mode_ids()) | {f"{s.id}.stale" for s in sensors}
    for inj in injections:
        if inj.fault_mode_id not in known:
            raise ModelFileError(f"injection references unknown fault {inj.fault_mode_id!r}", path)
    return model


def load_sim_model(path: str) -> SimModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sim_model(fh.read(), path)
