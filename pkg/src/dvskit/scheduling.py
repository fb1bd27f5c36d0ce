"""Deterministic scheduling over per-device execution queues.

Every device (plus the unified-memory lane for transfers) owns one serial
queue. Nodes not ordered by data dependencies are serialized inside their
queue by a deterministic tie-break: contention-free ready time, then task id,
then layer index, then name. Node end times follow the recurrence

    end(n) = max(end(parent_1), ..., end(parent_k), end(queue predecessor))
             + exec(n)

computed in integer microseconds. An event-driven simulation of the same
queue semantics serves as an independent cross-check and must agree exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import CycleError
from .hardware import ExecutionGraph, PlatformProfile

__all__ = [
    "order_queues",
    "end_times",
    "critical_path_latency",
    "simulate_discrete",
    "Schedule",
    "build_schedule",
    "EnergyReport",
    "estimate_energy",
    "schedule_to_csv",
]


def _asap_ready_times(eg: ExecutionGraph) -> dict[str, int]:
    """Earliest start ignoring queue contention (frozen for the tie-break)."""
    indeg = {n: len(ps) for n, ps in eg.parents.items()}
    stack = [n for n, d in indeg.items() if d == 0]
    ready = {n: 0 for n in stack}
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        done = ready[n] + eg.nodes[n].exec_us
        for c in eg.children[n]:
            ready[c] = max(ready.get(c, 0), done)
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    if seen != len(eg.nodes):
        raise CycleError("execution graph contains a cycle")
    return ready


def order_queues(eg: ExecutionGraph) -> dict[str, list[str]]:
    """Serialize nodes into per-queue total orders.

    A single global topological pass (heap keyed by the tie-break) is
    projected onto the queues, so every queue order is a linear extension of
    the dependency partial order.
    """
    ready = _asap_ready_times(eg)

    def key(name: str):
        node = eg.nodes[name]
        return (ready[name], node.task_id, node.layer_index, name)

    indeg = {n: len(ps) for n, ps in eg.parents.items()}
    heap = [(key(n), n) for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    orders: dict[str, list[str]] = {q: [] for q in eg.queues}
    seen = 0
    while heap:
        _, n = heapq.heappop(heap)
        orders[eg.nodes[n].queue].append(n)
        seen += 1
        for c in eg.children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, (key(c), c))
    if seen != len(eg.nodes):
        raise CycleError("execution graph contains a cycle")
    return orders


def end_times(eg: ExecutionGraph, orders: dict[str, list[str]]) -> dict[str, int]:
    """End time per node under the given queue orders (integer microseconds)."""
    pred: dict[str, str] = {}
    for order in orders.values():
        for a, b in zip(order, order[1:]):
            pred[b] = a
    combined: dict[str, list[str]] = {n: list(ps) for n, ps in eg.parents.items()}
    for b, a in pred.items():
        combined[b].append(a)
    indeg = {n: len(ps) for n, ps in combined.items()}
    children: dict[str, list[str]] = {n: [] for n in eg.nodes}
    for n, ps in combined.items():
        for p in ps:
            children[p].append(n)
    stack = [n for n, d in indeg.items() if d == 0]
    end: dict[str, int] = {}
    while stack:
        n = stack.pop()
        start = 0
        for p in combined[n]:
            if end[p] > start:
                start = end[p]
        end[n] = start + eg.nodes[n].exec_us
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    if len(end) != len(eg.nodes):
        raise CycleError("queue orders conflict with dependencies")
    return end


def critical_path_latency(
    eg: ExecutionGraph, end: dict[str, int]
) -> tuple[dict[str, int], int]:
    """Per-task latency (max end over the task's layers) and overall makespan."""
    per_task: dict[str, int] = {}
    for node in eg.compute_nodes():
        current = per_task.get(node.task_id, 0)
        per_task[node.task_id] = max(current, end[node.name])
    makespan = max(end.values(), default=0)
    return per_task, makespan


def simulate_discrete(eg: ExecutionGraph, orders: dict[str, list[str]]) -> dict[str, int]:
    """Event-driven oracle for the queue semantics.

    A node starts once it reaches the head of its queue and all parents have
    finished; it occupies the queue for exec_us. Completion events drive the
    clock. Must agree exactly with :func:`end_times`.
    """
    pending = {n: len(ps) for n, ps in eg.parents.items()}
    position = {q: 0 for q in orders}
    busy = {q: False for q in orders}
    finished: dict[str, int] = {}
    agenda: list[tuple[int, int, str]] = []
    seq = 0

    def try_start(queue: str, now: int):
        nonlocal seq
        if busy[queue] or position[queue] >= len(orders[queue]):
            return
        head = orders[queue][position[queue]]
        if pending[head] > 0:
            return
        busy[queue] = True
        heapq.heappush(agenda, (now + eg.nodes[head].exec_us, seq, head))
        seq += 1

    for q in orders:
        try_start(q, 0)
    while agenda:
        t, _, name = heapq.heappop(agenda)
        finished[name] = t
        q = eg.nodes[name].queue
        busy[q] = False
        position[q] += 1
        for child in eg.children[name]:
            pending[child] -= 1
            try_start(eg.nodes[child].queue, t)
        try_start(q, t)
    if len(finished) != len(eg.nodes):
        raise CycleError("simulation deadlocked; orders conflict with dependencies")
    return finished


@dataclass(frozen=True)
class Schedule:
    """Queue orders, node start/end times, and derived latencies."""

    orders: dict[str, list[str]]
    end_us: dict[str, int]
    start_us: dict[str, int]
    per_task_latency_us: dict[str, int]
    makespan_us: int


def build_schedule(eg: ExecutionGraph) -> Schedule:
    orders = order_queues(eg)
    end = end_times(eg, orders)
    start = {n: end[n] - eg.nodes[n].exec_us for n in end}
    per_task, makespan = critical_path_latency(eg, end)
    return Schedule(orders, end, start, per_task, makespan)


@dataclass(frozen=True)
class EnergyReport:
    """Active/idle energy split per device, in millijoules."""

    active_mj: dict[str, float]
    idle_mj: dict[str, float]
    total_mj: float


def estimate_energy(
    eg: ExecutionGraph, schedule: Schedule, platform: PlatformProfile
) -> EnergyReport:
    """Analytic energy: busy time at active power, the rest of the makespan at
    idle power, per device. Transfers on the memory lane draw no device power.
    """
    busy_us = {d: 0 for d in platform.device_ids}
    for node in eg.compute_nodes():
        busy_us[node.queue] += node.exec_us
    active_mj, idle_mj = {}, {}
    for dev in platform.devices:
        # microseconds x milliwatts = nanojoules
        active_nj = busy_us[dev.device_id] * dev.power_mw_active
        idle_nj = (schedule.makespan_us - busy_us[dev.device_id]) * dev.power_mw_idle
        active_mj[dev.device_id] = active_nj / 1e6
        idle_mj[dev.device_id] = idle_nj / 1e6
    total = sum(active_mj.values()) + sum(idle_mj.values())
    return EnergyReport(active_mj, idle_mj, total)


def schedule_to_csv(eg: ExecutionGraph, schedule: Schedule) -> str:
    """Per-queue timeline rows (queue,node,start_us,end_us) for Gantt plots."""
    lines = ["queue,node,start_us,end_us"]
    for queue in sorted(schedule.orders):
        for name in schedule.orders[queue]:
            lines.append(f"{queue},{name},{schedule.start_us[name]},{schedule.end_us[name]}")
    return "\n".join(lines) + "\n"
