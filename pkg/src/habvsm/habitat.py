"""Generator for the shipped habitat scenario.

Writes a complete, internally consistent scenario to a directory: the
simulation model (13 switchable loads on 6 buses, a 55-minute eclipse
inside a 2-hour horizon, 208 monitored parameters), the diagnosis model
(159 detectable fault modes, 159 limit tests, the power interconnection
graph), per-component transition models, anomaly training data for the 38
life-support parameters, and the scenario file wiring it together with 25
scheduling constraints (13 duty, 6 bus capacity, 6 operational).

Everything is deterministic: regenerating produces byte-identical files.
"""

from __future__ import annotations

import os

from .simulation import SimState, parse_sim_model

# id, bus, draw W, duty (min_on_s, period_s)
LOADS = [
    ("load01_ls_fan_a", "bus1", 180.0, (600, 1200)),
    ("load02_ls_fan_b", "bus1", 160.0, (600, 1200)),
    ("load03_scrubber", "bus2", 220.0, (600, 1200)),
    ("load04_wrs_pump", "bus2", 150.0, (900, 1800)),
    ("load05_heater_a", "bus3", 240.0, (600, 1200)),
    ("load06_sci_rack_a", "bus3", 120.0, (480, 900)),
    ("load07_sci_rack_b", "bus4", 130.0, (420, 900)),
    ("load08_comm_xpndr", "bus4", 90.0, (600, 1200)),
    ("load09_avionics_b", "bus5", 110.0, (600, 1200)),
    ("load10_heater_b", "bus5", 200.0, (600, 1200)),
    ("load11_valve_htr", "bus6", 80.0, (300, 600)),
    ("load12_cam_sys", "bus2", 70.0, (600, 1800)),
    ("load13_glovebox", "bus1", 100.0, (600, 2400)),
]

# Sized above worst-case concurrent draw, including the degraded-draw
# amendment on bus3 (240 W heater at x1.6 plus the 120 W science rack).
BUS_CAPACITY = {
    "bus1": 600.0,
    "bus2": 600.0,
    "bus3": 550.0,
    "bus4": 300.0,
    "bus5": 450.0,
    "bus6": 150.0,
}

HORIZON_S = 7200
SLOT_S = 60
ECLIPSE = (2400, 5700)  # 55 minutes
SOLAR_W = 1500.0
BATTERY_CAPACITY_WH = 4000.0
BATTERY_SOC_WH = 3000.0
MAX_DISCHARGE_W = 2600.0
ENERGY_HEADROOM = 1.02

LS_NAMES = [
    "cabin_press_kpa", "o2_partial_kpa", "co2_partial_kpa", "humidity_pct",
    "cabin_temp_c", "avionics_air_c", "fan_a_flow_lps", "fan_b_flow_lps",
    "scrubber_dp_kpa", "scrubber_bed_c", "condensate_rate", "coolant_flow_lpm",
] + [f"air_zone{i:02d}" for i in range(1, 27)]  # 12 + 26 = 38

THM_NAMES = [f"zone{i:02d}_c" for i in range(1, 35)]  # 34

AV_NAMES = [
    "proc_a_temp_c", "proc_b_temp_c", "mem_ecc_rate", "net_sw_temp_c",
    "gnc_gyro_bias", "star_trk_temp",
] + [f"chan{i:02d}" for i in range(1, 22)]  # 6 + 21 = 27

# Four avionics channels carry no fault mode (keeps detectable modes at 159).
AV_UNFAULTED = {"chan18", "chan19", "chan20", "chan21"}


def _aux_sensor_defs():
    """Deterministic generator parameters for the 99 auxiliary sensors."""
    defs = []
    for block, names in (("ls", LS_NAMES), ("thm", THM_NAMES), ("av", AV_NAMES)):
        for i, name in enumerate(names):
            nominal = {"ls": 50.0, "thm": 20.0, "av": 35.0}[block] + 1.5 * i
            amplitude = 0.4 + 0.25 * (i % 5)
            period = 600.0 + 120.0 * (i % 7)
            phase = 0.5 * i
            noise = 0.04 + 0.02 * (i % 3)
            band = amplitude + 6.0 * noise + 0.5
            faulted = not (block == "av" and name in AV_UNFAULTED)
            bias = 4.0 * band if faulted else 0.0
            defs.append(
                {
                    "id": f"{block}.{name}",
                    "nominal": nominal,
                    "amplitude": amplitude,
                    "period_s": period,
                    "phase": phase,
                    "noise_sigma": noise,
                    "band_halfwidth": band,
                    "fault_bias": bias,
                }
            )
    return defs


def sim_model_text() -> str:
    lines = ["# Habitat power and sensor model", "[loads]"]
    for lid, bus, draw, _duty in LOADS:
        lines.append(f"{lid} bus_id={bus} power_draw_w={draw:g}")
    lines.append("[power]")
    lines.append(f"solar_output_w = {SOLAR_W:g}")
    lines.append(f"battery_capacity_wh = {BATTERY_CAPACITY_WH:g}")
    lines.append(f"battery_soc_wh = {BATTERY_SOC_WH:g}")
    lines.append(f"max_discharge_w = {MAX_DISCHARGE_W:g}")
    lines.append(f"reserve_wh = {reserve_wh():g}")
    for bus, cap in BUS_CAPACITY.items():
        lines.append(f"bus {bus} capacity_w={cap:g}")
    lines.append("[eclipse]")
    lines.append(f"{ECLIPSE[0]} {ECLIPSE[1]}")
    lines.append("[sensors]")
    for d in _aux_sensor_defs():
        lines.append(
            f"{d['id']} nominal={d['nominal']:g} amplitude={d['amplitude']:g} "
            f"period_s={d['period_s']:g} phase={d['phase']:g} "
            f"noise_sigma={d['noise_sigma']:g} band_halfwidth={d['band_halfwidth']:g} "
            f"fault_bias={d['fault_bias']:g}"
        )
    return "\n".join(lines) + "\n"


def duty_energy_wh() -> float:
    total = 0.0
    for _lid, _bus, draw, (min_on, period) in LOADS:
        windows = HORIZON_S // period
        slots_per_window = -(-min_on // SLOT_S)  # ceil
        total += draw * windows * slots_per_window * SLOT_S / 3600.0
    return total


def reserve_wh() -> float:
    """Battery reserve sized so the energy budget is duty-exact plus headroom."""
    eclipse_slots = (ECLIPSE[1] - ECLIPSE[0]) // SLOT_S
    daylight_slots = HORIZON_S // SLOT_S - eclipse_slots
    solar_energy = SOLAR_W * daylight_slots * SLOT_S / 3600.0
    budget = ENERGY_HEADROOM * duty_energy_wh()
    return BATTERY_SOC_WH + solar_energy - budget


def dmatrix_text() -> str:
    modes = []
    tests = []
    for lid, bus, draw, _duty in LOADS:
        modes.append(f"{lid}.stuck_on component={lid} sched_effect=exclude")
        modes.append(f"{lid}.stuck_off component={lid} sched_effect=exclude")
        modes.append(
            f"{lid}.degraded_draw component={lid} sched_effect=degraded draw_multiplier=1.6"
        )
        modes.append(f"{lid}.power_bias component={lid} sched_effect=none")
        eps = 8.0
        covers = f"{lid}.stuck_on|{lid}.stuck_off|{lid}.degraded_draw|{lid}.power_bias"
        tests.append(f"t_{lid}_res, {lid}.power_residual_w, -{eps:g}, {eps:g}, covers={covers}")
        tests.append(f"t_{lid}_stuckon, {lid}.mode_residual, -1.5, 0.5, covers={lid}.stuck_on")
        tests.append(f"t_{lid}_stuckoff, {lid}.mode_residual, -0.5, 1.5, covers={lid}.stuck_off")
        tests.append(f"t_{lid}_cross, {lid}.consistency_w, 0, 6.0, covers={lid}.power_bias")
    for bus in BUS_CAPACITY:
        modes.append(f"{bus}.trip component={bus} sched_effect=bus_out")
        modes.append(f"{bus}.v_bias component={bus} sched_effect=none")
        tests.append(
            f"t_{bus}_volt, {bus}.voltage_v, 26.5, 29.5, covers={bus}.trip|{bus}.v_bias"
        )
        tests.append(f"t_{bus}_switch, {bus}.switch_residual, -0.5, 0.5, covers={bus}.trip")
    for d in _aux_sensor_defs():
        if d["fault_bias"] == 0.0:
            continue
        pid = d["id"]
        modes.append(f"{pid}.bias component={pid} sched_effect=none")
        lo = d["nominal"] - d["band_halfwidth"]
        hi = d["nominal"] + d["band_halfwidth"]
        tests.append(f"t_{pid}, {pid}, {lo:g}, {hi:g}, covers={pid}.bias")

    graph = []
    graph.append("edge solar -> pcu_a")
    graph.append("edge solar -> pcu_b")
    graph.append("edge battery -> pcu_a")
    graph.append("edge battery -> pcu_b")
    for bus in BUS_CAPACITY:
        graph.append(f"edge pcu_a -> {bus}")
        graph.append(f"edge pcu_b -> {bus}")
    for lid, bus, _draw, _duty in LOADS:
        graph.append(f"edge {bus} -> {lid}")
    graph.append("source power @ solar")
    graph.append("source power @ battery")
    for bus in BUS_CAPACITY:
        graph.append(f"consumer power @ {bus}")

    return (
        "# Habitat diagnosis model\n[modes]\n"
        + "\n".join(modes)
        + "\n[tests]\n"
        + "\n".join(tests)
        + "\n[graph]\n"
        + "\n".join(graph)
        + "\n"
    )


def transition_model_text() -> str:
    blocks = []
    for lid, bus, draw, _duty in LOADS:
        thr = 0.4 * draw
        blocks.append(
            "\n".join(
                [
                    f"[component {lid}]",
                    "modes: on off stuck_on stuck_off",
                    "nominal: off --ON--> on",
                    "nominal: on --OFF--> off",
                    "fault: on -> stuck_on",
                    "fault: on -> stuck_off",
                    "fault: off -> stuck_on",
                    "fault: off -> stuck_off",
                    f"observe on: lookup({lid}.power_w) > {thr:g} or lookup({bus}.voltage_v) < 14",
                    f"observe off: lookup({lid}.power_w) < {thr:g}",
                    f"observe stuck_on: lookup({lid}.power_w) > {thr:g} or lookup({bus}.voltage_v) < 14",
                    f"observe stuck_off: lookup({lid}.power_w) < {thr:g}",
                ]
            )
        )
    for bus in BUS_CAPACITY:
        blocks.append(
            "\n".join(
                [
                    f"[component {bus}]",
                    "modes: closed tripped",
                    "fault: closed -> tripped",
                    f"observe closed: lookup({bus}.voltage_v) > 14",
                    f"observe tripped: lookup({bus}.voltage_v) < 14",
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"


def scenario_text(name: str, duration_s: int, seed: int, injections: list[str],
                  extra_vsm: dict | None = None) -> str:
    lines = [
        "[scenario]",
        f"name = {name}",
        f"duration_s = {duration_s}",
        "frame_dt_s = 1",
        f"seed = {seed}",
        "sim_model = habitat.sim",
        "diagnosis_model = habitat.dmx",
        "transition_model = habitat.hsm",
        "anomaly_training = anomaly_train.csv",
        "anomaly_epsilon = 2.5",
        "anomaly_quantile = 0.99",
        "anomaly_holdout_fraction = 0.25",
        "",
        "[anomaly_parameters]",
        "ls.*",
        "",
        "[initial_modes]",
    ]
    for lid, _bus, _draw, _duty in LOADS:
        lines.append(f"{lid} off")
    for bus in BUS_CAPACITY:
        lines.append(f"{bus} closed")
    lines += ["", "[constraints]"]
    for lid, _bus, _draw, (min_on, period) in LOADS:
        lines.append(f"duty {lid} min_on_s={min_on} period_s={period}")
    for bus, cap in BUS_CAPACITY.items():
        lines.append(f"bus_capacity {bus} {cap:g}")
    # 6 operational constraints: 2 sync pairs, 2 max-off rules, 1 minimum
    # on-run rule, 1 mutual exclusion pair.
    lines.append("sync load02_ls_fan_b load03_scrubber")
    lines.append("sync load09_avionics_b load10_heater_b")
    lines.append("max_off load04_wrs_pump max_off_s=1800")
    lines.append("max_off load09_avionics_b max_off_s=1800")
    lines.append("min_on_run load05_heater_a min_run_s=300")
    lines.append("mutex load06_sci_rack_a load07_sci_rack_b")
    lines += [
        "",
        "[vsm]",
        "replan_period_s = 300",
        "fault_debounce_frames = 3",
        "solver_budget_ms = 150",
        "approval_timeout_s = 60",
        f"horizon_s = {HORIZON_S}",
        f"slot_s = {SLOT_S}",
    ]
    for key, value in (extra_vsm or {}).items():
        lines.append(f"{key} = {value}")
    lines += ["", "[injections]"]
    lines += injections
    return "\n".join(lines) + "\n"


def training_data_text(rows: int = 3000, seed: int = 990_001) -> str:
    """Nominal life-support telemetry sampled from the simulation itself."""
    model = parse_sim_model(sim_model_text())
    params = [s.id for s in model.aux_sensors if s.id.startswith("ls.")]
    sim = SimState(model, seed=seed)
    out = [",".join(params)]
    for _ in range(rows):
        frame = sim.step(1.0)
        out.append(",".join(f"{frame.values[p]:.9g}" for p in params))
    return "\n".join(out) + "\n"


def build_habitat(out_dir: str) -> list[str]:
    """Writes the habitat scenario family; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def write(name: str, text: str):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(path)

    write("habitat.sim", sim_model_text())
    write("habitat.dmx", dmatrix_text())
    write("habitat.hsm", transition_model_text())
    write("anomaly_train.csv", training_data_text())
    write("habitat.cfg", scenario_text("habitat", HORIZON_S, seed=20_240_801, injections=[]))
    write(
        "bus_trip.cfg",
        scenario_text(
            "habitat-bus-trip", 3600, seed=20_240_802,
            injections=["bus4.trip at=1800"],
        ),
    )
    write(
        "degraded_draw.cfg",
        scenario_text(
            "habitat-degraded-draw", 3600, seed=20_240_803,
            injections=["load05_heater_a.degraded_draw at=1200 multiplier=1.6"],
        ),
    )
    return written


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="regenerate the habitat scenario files")
    parser.add_argument("out_dir")
    args = parser.parse_args(argv)
    for path in build_habitat(args.out_dir):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
