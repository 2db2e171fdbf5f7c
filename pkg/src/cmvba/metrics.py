"""Per-run metrics derived from trace events."""

from __future__ import annotations

from collections import defaultdict


def compute_metrics(trace) -> dict:
    header = trace.header
    instances = header["instances"]
    byz = set(header["byzantine"])
    msgs = defaultdict(int)
    total = defaultdict(int)
    payload = defaultdict(int)
    start_clock = {}
    iterations = defaultdict(int)
    rounds = defaultdict(int)
    depth = defaultdict(int)
    for e in trace.events:
        typ = e["type"]
        if typ == "send":
            k = e["instance"]
            msgs[k] += 1
            total[k] += e["bytes"]
            payload[k] += e["payload"]
        elif e["from"] in byz:
            continue
        elif typ == "phase" and e["info"] == "CS":
            start_clock[(e["from"], e["instance"])] = e["clock"]
        elif typ == "decide":
            k = e["instance"]
            iterations[k] = max(iterations[k], e["iterations"])
            rounds[k] = max(rounds[k], e["rounds"])
            span = e["clock"] - start_clock.get((e["from"], k), 0)
            depth[k] = max(depth[k], span)
    ks = range(1, instances + 1)
    m = [msgs[k] for k in ks]
    b = [total[k] for k in ks]
    p = [payload[k] for k in ks]
    r = [iterations[k] for k in ks]
    return {
        "instances": instances,
        "messages": m,
        "bytes": b,
        "payload_bytes": p,
        "overhead_bytes": [x - y for x, y in zip(b, p)],
        "messages_mean": sum(m) / instances,
        "bytes_mean": sum(b) / instances,
        "payload_mean": sum(p) / instances,
        "overhead_mean": (sum(b) - sum(p)) / instances,
        "R": r,
        "R_max": max(r) if r else 0,
        "R_mean": sum(r) / instances,
        "coin_rounds": [rounds[k] for k in ks],
        "depth": [depth[k] for k in ks],
        "depth_mean": sum(depth[k] for k in ks) / instances,
    }
