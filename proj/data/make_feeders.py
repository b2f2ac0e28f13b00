"""Regenerate the bundled feeder, fleet and scenario files.

ieee13: IEEE 13-node test feeder reduced to a balanced single-phase
equivalent using the phase-A self impedances of each line configuration.
The 633 and 645 laterals are lengthened/shortened, the 671 subtree is
scaled by 0.35 and the whole feeder by 0.45 so that the clustering
separates {632, 645, 646}, {633, 634} and the 671 area.

ieee123: synthetic 122-node radial feeder with four laterals of 14, 46, 12
and 50 nodes hanging off the substation, impedances scaled by 0.35 so the
baseline alone stays above 0.954 p.u. Not the IEEE 123-node data.
"""
import json
import pathlib
import random

HERE = pathlib.Path(__file__).parent
FT_PER_MILE = 5280.0
CFG = {601: (0.3465, 1.0179), 602: (0.7526, 1.1814), 603: (1.3294, 1.3471),
       604: (1.3238, 1.3569), 605: (1.3292, 1.3475), 606: (0.7982, 0.4463),
       607: (1.3425, 0.5124)}


def dump(name, doc):
    (HERE / name).write_text(json.dumps(doc, indent=2) + "\n")


def ieee13():
    labels = ["632", "633", "634", "645", "646", "671", "680", "684", "611", "652", "692", "675"]
    lines = [(1, 0, 2000, 601), (2, 1, 1000, 602), (3, 2, None, "xfm"), (4, 1, 200, 603),
             (5, 4, 300, 603), (6, 1, 2000, 601), (7, 6, 1000, 601), (8, 6, 300, 604),
             (9, 8, 300, 605), (10, 8, 800, 607), (11, 6, None, "switch"), (12, 11, 500, 606)]
    loads = {3: (400, 290), 4: (170, 125), 5: (230, 132), 10: (128, 86), 6: (1155, 660),
             12: (843, 462), 11: (170, 151), 9: (170, 80)}
    nodes = []
    for j, p, ft, c in lines:
        if c == "xfm":
            r, x = 0.05, 0.20
        elif c == "switch":
            r, x = 0.002, 0.002
        else:
            r, x = (v * ft / FT_PER_MILE for v in CFG[c])
        if j >= 7:
            r, x = r * 0.35, x * 0.35
        kw, kvar = loads.get(j, (0, 0))
        nodes.append({"id": j, "label": labels[j - 1], "parent": p,
                      "r_ohm": round(r * 0.45, 10), "x_ohm": round(x * 0.45, 10),
                      "load_kw": kw, "load_kvar": kvar})
    dump("ieee13_network.json", {"name": "ieee13-reconstruction", "phases": 3,
                                 "slack_voltage_v": 4160, "nodes": nodes})
    dump("ieee13_fleet.json", {"generate": {
        "nodes": [2, 3, 4, 5, 7, 8, 9, 10, 11, 12], "per_node": 50, "pmax_kw": 6.6,
        "eta": 0.9, "capacity_kwh": 40, "soc_need_range": [0.2, 0.6]}})


def ieee123():
    rng = random.Random(123)
    sizes = [14, 46, 12, 50]
    nodes = []
    nid = 0
    for size in sizes:
        first = nid + 1
        for k in range(size):
            nid += 1
            if k == 0:
                parent, ft, cfg = 0, 2500, 601
            else:
                parent = rng.randint(max(first, nid - 3), nid - 1)
                ft, cfg = rng.choice([200, 250, 300, 350, 400, 500]), rng.choice([601, 602, 604, 606])
            r, x = (v * ft / FT_PER_MILE for v in CFG[cfg])
            kw = rng.choice([0, 0, 20, 20, 40, 40, 75])
            nodes.append({"id": nid, "parent": parent, "r_ohm": round(r * 0.35, 10),
                          "x_ohm": round(x * 0.35, 10), "load_kw": kw, "load_kvar": round(kw * 0.5, 3)})
    dump("ieee123_network.json", {"name": "ieee123-synthetic", "phases": 3,
                                  "slack_voltage_v": 4160, "nodes": nodes})
    counts = {}
    for j in range(1, 15):
        counts[str(j)] = 6
    for j in range(15, 61):
        counts[str(j)] = 4
    for j in range(61, 73):
        counts[str(j)] = 7 if j < 71 else 6
    for j in range(73, 123):
        counts[str(j)] = 5
    dump("ieee123_fleet.json", {"generate": {
        "nodes": list(range(1, 123)), "counts": counts, "pmax_kw": 6.6, "eta": 0.9,
        "capacity_kwh": 40, "soc_need_range": [0.2, 0.6]}})
    membership = [1] * 14 + [2] * 46 + [3] * 12 + [4] * 50
    blocks = [(1, 31), (32, 62), (63, 93), (92, 122)]
    groups = [{"id": s + 1, "members": [j + 1 for j, g in enumerate(membership) if g == s + 1],
               "subset_rows": list(range(a, b + 1))} for s, (a, b) in enumerate(blocks)]
    dump("ieee123_plan.json", {"r": 4, "d": 91, "rows": 122, "subset_size": 31, "entity": "node",
                               "membership": membership, "groups": groups})


def traffic():
    routes = [[2, 3, 6], [2, 5, 9], [1, 5, 9], [6, 4, 9], [8, 9]]
    k = [10, 0, 10, 10, 10]
    group = [1, 1, 2, 2, 2]
    dump("fig7_traffic.json", {"links": 9, "capacity": [1] * 9, "initial_flow": 1.0,
                               "agents": [{"route": r, "k": kk, "group": g}
                                          for r, kk, g in zip(routes, k, group)]})


if __name__ == "__main__":
    ieee13()
    ieee123()
    traffic()
