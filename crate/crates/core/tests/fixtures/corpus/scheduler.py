"""Round-robin and priority task scheduling simulations."""

import heapq


class Task:
    def __init__(self, name, arrival, burst, priority):
        self.name = name
        self.arrival = arrival
        self.burst = burst
        self.priority = priority


def round_robin(tasks, quantum):
    queue = sorted(tasks, key=lambda t: (t.arrival, t.name))
    remaining = {t.name: t.burst for t in tasks}
    clock = 0
    order = []
    done = {}
    ready = []
    pending = list(queue)
    while pending or ready:
        while pending and pending[0].arrival <= clock:
            ready.append(pending.pop(0))
        if not ready:
            clock = pending[0].arrival
            continue
        task = ready.pop(0)
        run = min(quantum, remaining[task.name])
        order.append((task.name, clock, clock + run))
        clock += run
        remaining[task.name] -= run
        while pending and pending[0].arrival <= clock:
            ready.append(pending.pop(0))
        if remaining[task.name]:
            ready.append(task)
        else:
            done[task.name] = clock
    return order, done


def priority_schedule(tasks):
    pending = sorted(tasks, key=lambda t: (t.arrival, t.name))
    heap = []
    clock = 0
    finish = {}
    while pending or heap:
        while pending and pending[0].arrival <= clock:
            task = pending.pop(0)
            heapq.heappush(heap, (task.priority, task.arrival, task.name, task))
        if not heap:
            clock = pending[0].arrival
            continue
        _, _, name, task = heapq.heappop(heap)
        clock += task.burst
        finish[name] = clock
    return finish


def waiting_times(tasks, finish):
    waits = {}
    for task in tasks:
        turnaround = finish[task.name] - task.arrival
        waits[task.name] = turnaround - task.burst
    return waits


def average(values):
    vals = list(values)
    return sum(vals) / len(vals) if vals else 0.0


def gantt(order):
    parts = []
    for name, start, end in order:
        parts.append("%s[%d-%d]" % (name, start, end))
    return " ".join(parts)


def utilization(order, horizon):
    busy = 0
    for _, start, end in order:
        busy += end - start
    return busy / horizon if horizon else 0.0


def make_tasks():
    spec = [("a", 0, 5, 3), ("b", 1, 3, 1), ("c", 2, 8, 4), ("d", 3, 6, 2), ("e", 20, 2, 1)]
    return [Task(*row) for row in spec]


def main():
    tasks = make_tasks()
    order, done = round_robin(tasks, 2)
    assert sum(t.burst for t in tasks) == sum(end - start for _, start, end in order)
    print("gantt", gantt(order))
    print("done", sorted(done.items()))
    waits = waiting_times(tasks, done)
    print("rr wait", round(average(waits.values()), 3))
    finish = priority_schedule(tasks)
    assert finish["a"] == 5 and finish["b"] == 8
    pwaits = waiting_times(tasks, finish)
    print("prio finish", sorted(finish.items()))
    print("prio wait", round(average(pwaits.values()), 3))
    horizon = max(end for _, _, end in order)
    print("util", round(utilization(order, horizon), 4))
    assert average([]) == 0.0


if __name__ == "__main__":
    main()
