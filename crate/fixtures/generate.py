"""Regenerate the shipped fixtures.

Network data follows the IEEE 14-bus test system (branch r/x/charging and
base loads); unit placement, costs and profiles are synthetic.

    python3 fixtures/generate.py
"""

import csv
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))

# from, to, r, x, total line charging (pu)
IEEE14_BRANCHES = [
    (1, 2, 0.01938, 0.05917, 0.0528),
    (1, 5, 0.05403, 0.22304, 0.0492),
    (2, 3, 0.04699, 0.19797, 0.0438),
    (2, 4, 0.05811, 0.17632, 0.0340),
    (2, 5, 0.05695, 0.17388, 0.0346),
    (3, 4, 0.06701, 0.17103, 0.0128),
    (4, 5, 0.01335, 0.04211, 0.0),
    (4, 7, 0.0, 0.20912, 0.0),
    (4, 9, 0.0, 0.55618, 0.0),
    (5, 6, 0.0, 0.25202, 0.0),
    (6, 11, 0.09498, 0.19890, 0.0),
    (6, 12, 0.12291, 0.25581, 0.0),
    (6, 13, 0.06615, 0.13027, 0.0),
    (7, 8, 0.0, 0.17615, 0.0),
    (7, 9, 0.0, 0.11001, 0.0),
    (9, 10, 0.03181, 0.08450, 0.0),
    (9, 14, 0.12711, 0.27038, 0.0),
    (10, 11, 0.08205, 0.19207, 0.0),
    (12, 13, 0.22092, 0.19988, 0.0),
    (13, 14, 0.17093, 0.34802, 0.0),
]

# bus: (P MW, Q MVAr)
IEEE14_LOADS = {
    2: (21.7, 12.7),
    3: (94.2, 19.0),
    4: (47.8, -3.9),
    5: (7.6, 1.6),
    6: (11.2, 7.5),
    9: (29.5, 16.6),
    10: (9.0, 5.8),
    11: (3.5, 1.8),
    12: (6.1, 1.6),
    13: (13.5, 5.8),
    14: (14.9, 5.0),
}
IEEE14_SHUNTS = {9: 0.19}

# Hourly demand shape, scaled so the day spans [MIN_DEMAND, MAX_DEMAND].
DAY_SHAPE = [
    0.62, 0.58, 0.56, 0.55, 0.57, 0.63, 0.72, 0.82, 0.89, 0.93, 0.96, 0.98,
    0.97, 0.95, 0.94, 0.95, 0.97, 1.00, 0.99, 0.94, 0.87, 0.79, 0.71, 0.66,
]
MIN_DEMAND = 165.0
MAX_DEMAND = 295.0

WIND_SHAPE = [
    0.72, 0.75, 0.78, 0.80, 0.77, 0.70, 0.62, 0.55, 0.48, 0.42, 0.38, 0.36,
    0.35, 0.37, 0.40, 0.45, 0.50, 0.55, 0.60, 0.64, 0.68, 0.70, 0.71, 0.72,
]


def pv_shape(hour):
    if hour < 6 or hour > 18:
        return 0.0
    return round(0.85 * math.sin(math.pi * (hour - 6) / 12.0), 4)


def admittance(r, x):
    den = r * r + x * x
    return round(r / den, 6), round(-x / den, 6)


def generators():
    return [
        dict(id="G1", bus=1, **{"class": "slow"}, p_min=30.0, p_max=100.0,
             q_min=-40.0, q_max=80.0, inertia_s=5.0, pfr_max=40.0,
             startup_cost=1500.0, running_cost=35.0, min_up_h=4,
             min_down_h=4, initial_on=True),
        dict(id="G2", bus=2, **{"class": "slow"}, p_min=24.0, p_max=80.0,
             q_min=-40.0, q_max=60.0, inertia_s=5.0, pfr_max=32.0,
             startup_cost=1200.0, running_cost=40.0, min_up_h=3,
             min_down_h=3, initial_on=True),
        dict(id="G3", bus=3, **{"class": "fast"}, p_min=10.0, p_max=60.0,
             q_min=-20.0, q_max=40.0, inertia_s=4.0, pfr_max=24.0,
             startup_cost=300.0, running_cost=2400.0, min_up_h=1,
             min_down_h=1, initial_on=False),
    ]


def common(name, buses, branches, loads):
    return {
        "schema": "fcsched-case/1",
        "name": name,
        "base_mva": 100.0,
        "buses": buses,
        "branches": branches,
        "generators": generators(),
        "storage": [
            dict(id="B1", bus=6, p_charge_max=-50.0, p_discharge_max=50.0,
                 energy_mwh=150.0, efficiency=0.9, soc_min=0.15,
                 soc_max=0.85, soc_init=0.5, constant_power_window_s=600.0),
        ],
        "wind": [dict(id="W1", bus=8, capacity_mw=60.0, gamma=0.0005,
                      h_si_max=30.0)],
        "pv": [dict(id="PV1", bus=6, capacity_mw=100.0, storage="B1")],
        "loads": [dict(id=f"L{b}", bus=b, noncritical_share=0.3, voll=5000.0)
                  for b in loads],
        "pcc": dict(bus=1, s_max_mva=100.0, min_import_mw=0.0,
                    import_price=0.0),
        "frequency": dict(nadir_hz=0.8, steady_state_hz=0.5, rocof_hzps=0.5,
                          nominal_hz=50.0, pfr_delivery_s=10.0,
                          damping={"fraction_of_demand": 0.005}),
        "demand_range_mw": [160.0, 300.0],
    }


def ieee14():
    shunt = {b: 0.0 for b in range(1, 15)}
    for b, v in IEEE14_SHUNTS.items():
        shunt[b] += v
    branches = []
    for f, t, r, x, bc in IEEE14_BRANCHES:
        shunt[f] += bc / 2
        shunt[t] += bc / 2
        g, b = admittance(r, x)
        rating = 200.0 if f == 1 else 120.0
        branches.append(dict(id=f"L{f}-{t}", **{"from": f}, to=t, g=g, b=b,
                             s_max_mva=rating))
    buses = [dict(id=b, v_min=0.94, v_max=1.06, shunt_b=round(shunt[b], 6))
             for b in range(1, 15)]
    return common("ieee14-mod", buses, branches, sorted(IEEE14_LOADS)), {
        b: IEEE14_LOADS[b] for b in IEEE14_LOADS
    }


# Buses 5, 7 and 9-14 folded into their nearest kept bus.
SIX_BUS_BRANCHES = [
    (1, 2, 0.01938, 0.05917),
    (1, 4, 0.05403, 0.22304),
    (2, 3, 0.04699, 0.19797),
    (2, 4, 0.05811, 0.17632),
    (3, 4, 0.06701, 0.17103),
    (4, 6, 0.0, 0.25202),
    (4, 8, 0.0, 0.38500),
]
SIX_BUS_LOADS = {2: (21.7, 12.7), 3: (94.2, 19.0), 4: (108.8, 26.5),
                 6: (34.3, 14.2)}


def six_bus():
    buses = [dict(id=b, v_min=0.94, v_max=1.06, shunt_b=0.0)
             for b in (1, 2, 3, 4, 6, 8)]
    branches = []
    for f, t, r, x in SIX_BUS_BRANCHES:
        g, b = admittance(r, x)
        branches.append(dict(id=f"L{f}-{t}", **{"from": f}, to=t, g=g, b=b,
                             s_max_mva=200.0))
    return common("six-bus", buses, branches, sorted(SIX_BUS_LOADS)), SIX_BUS_LOADS


def scenario_rows(loads, hours, scenarios):
    base_total = sum(p for p, _ in loads.values())
    rows = [("*", "*", "*", "dt_h", 1.0)]
    for sid, prob, _, _, _ in scenarios:
        rows.append((sid, "*", "*", "probability", prob))
    for sid, _, load_scale, wind_scale, pv_scale in scenarios:
        for t, hour in enumerate(hours):
            total = MIN_DEMAND + (MAX_DEMAND - MIN_DEMAND) * (
                DAY_SHAPE[hour] - min(DAY_SHAPE)) / (max(DAY_SHAPE) - min(DAY_SHAPE))
            k = total * load_scale / base_total
            for b in sorted(loads):
                p, q = loads[b]
                rows.append((sid, t, f"L{b}", "p_mw", round(p * k, 3)))
                rows.append((sid, t, f"L{b}", "q_mvar", round(q * k, 3)))
            wind = round(60.0 * min(1.0, WIND_SHAPE[hour] * wind_scale), 3)
            rows.append((sid, t, "W1", "avail_mw", wind))
            rows.append((sid, t, "W1", "h_si_max", round(0.5 * wind, 3)))
            rows.append((sid, t, "PV1", "avail_mw",
                         round(100.0 * pv_shape(hour) * pv_scale, 3)))
    return rows


def write_case(path, case):
    with open(path, "w") as f:
        json.dump(case, f, indent=2)
        f.write("\n")


def write_rows(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "period", "entity", "kind", "value"])
        w.writerows(rows)


def main():
    scenarios = [("high", 0.6, 1.0, 1.0, 1.0), ("low", 0.4, 0.97, 0.8, 0.75)]
    case, loads = ieee14()
    write_case(os.path.join(HERE, "ieee14-mod.json"), case)
    write_rows(os.path.join(HERE, "ieee14-day.csv"),
               scenario_rows(loads, range(24), scenarios))
    case, loads = six_bus()
    write_case(os.path.join(HERE, "six-bus.json"), case)
    write_rows(os.path.join(HERE, "six-bus-6x2.csv"),
               scenario_rows(loads, range(9, 15), scenarios))


if __name__ == "__main__":
    main()
