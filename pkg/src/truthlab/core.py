"""Scheduling instances, allocations, makespan, and exact optimal makespan.

Tasks are edges of a multi-graph between machines: a task can only be
assigned to one of its two endpoints (a loop has a single legal machine).
Full m x n matrices with huge sentinel entries are not modeled; machines
that cannot receive a task are simply outside its support.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InstanceTooLarge, InvalidAllocation, ParseError
from .values import format_rational, parse_rational, rational

#: cap on the number of support-respecting assignments enumerated exactly
ENUMERATION_CAP = 2**26


@dataclass
class Edge:
    """Task between machines ``a`` and ``b`` (a == b encodes a loop)."""

    id: int
    a: int
    b: int
    va: Fraction
    vb: Fraction

    def support(self):
        return {self.a, self.b}

    def value_on(self, machine: int) -> Fraction:
        if machine == self.a:
            return self.va
        if machine == self.b:
            return self.vb
        raise InvalidAllocation(f"machine {machine} not in support of task {self.id}")

    def other(self, machine: int) -> int:
        if machine == self.a:
            return self.b
        if machine == self.b:
            return self.a
        raise InvalidAllocation(f"machine {machine} not in support of task {self.id}")

    def copy(self) -> "Edge":
        return Edge(self.id, self.a, self.b, self.va, self.vb)


class Instance:
    """Multi-graph scheduling instance: n machines, tasks as edges."""

    def __init__(self, n: int, edges):
        if n < 1:
            raise ParseError("machine count must be >= 1", field="n")
        self.n = n
        self.edges = list(edges)
        self._by_id = {}
        for e in self.edges:
            if e.id in self._by_id:
                raise ParseError(f"duplicate task id {e.id}", field="tasks.id")
            if not (0 <= e.a < n and 0 <= e.b < n):
                raise ParseError(f"task {e.id} endpoint out of range", field="tasks")
            if e.va < 0 or e.vb < 0:
                raise ParseError(f"task {e.id} has a negative value", field="tasks")
            if e.a == e.b and e.va != e.vb:
                raise ParseError(
                    f"loop task {e.id} must carry one value (va == vb)", field="tasks"
                )
            self._by_id[e.id] = e

    def task(self, task_id: int) -> Edge:
        return self._by_id[task_id]

    def task_ids(self):
        return [e.id for e in self.edges]

    def clone(self) -> "Instance":
        return Instance(self.n, [e.copy() for e in self.edges])

    def set_value(self, task_id: int, machine: int, value: Fraction):
        """Overwrite one side's value in place (loops take a single value)."""
        e = self._by_id[task_id]
        value = Fraction(value)
        if e.a == e.b:
            if machine != e.a:
                raise InvalidAllocation(f"machine {machine} not on loop {task_id}")
            e.va = value
            e.vb = value
        elif machine == e.a:
            e.va = value
        elif machine == e.b:
            e.vb = value
        else:
            raise InvalidAllocation(f"machine {machine} not in support of task {task_id}")

    def machine_tasks(self, machine: int):
        """Ids of tasks whose support contains `machine`."""
        return [e.id for e in self.edges if machine in e.support()]

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return self.n == other.n and [
            (e.id, e.a, e.b, e.va, e.vb) for e in self.edges
        ] == [(e.id, e.a, e.b, e.va, e.vb) for e in other.edges]


@dataclass
class Allocation:
    """Total assignment: task id -> machine index (within support)."""

    assignment: dict

    def machine_of(self, task_id: int) -> int:
        return self.assignment[task_id]

    def validate(self, instance: Instance):
        ids = set(instance.task_ids())
        if set(self.assignment) != ids:
            raise InvalidAllocation("allocation is not total over the task set")
        for tid, machine in self.assignment.items():
            if machine not in instance.task(tid).support():
                raise InvalidAllocation(
                    f"task {tid} assigned outside its support ({machine})"
                )

    def indicator(self, machine: int, task_id: int) -> int:
        return 1 if self.assignment[task_id] == machine else 0


@dataclass
class Star:
    """Edges all incident to one root, at most one edge per leaf."""

    root: int
    edges: list  # task ids

    def leaves(self, instance: Instance):
        out = []
        for tid in self.edges:
            e = instance.task(tid)
            if self.root not in e.support() or e.a == e.b:
                raise InvalidAllocation(f"task {tid} is not a root-incident star edge")
            out.append(e.other(self.root))
        if len(set(out)) != len(out):
            raise InvalidAllocation("star has two edges on one leaf")
        return out


@dataclass
class MultiStar:
    """Root plus parallel edges per leaf; multiplicity = min per-leaf count."""

    root: int
    edges_by_leaf: dict = field(default_factory=dict)  # leaf -> [task ids]

    def multiplicity(self) -> int:
        if not self.edges_by_leaf:
            return 0
        return min(len(v) for v in self.edges_by_leaf.values())

    def spanning_star(self, choice: dict) -> Star:
        """Star taking edge choice[leaf] for every leaf."""
        return Star(self.root, [choice[leaf] for leaf in sorted(self.edges_by_leaf)])


def makespan(instance: Instance, alloc: Allocation) -> Fraction:
    """Maximum over machines of the total assigned processing time."""
    alloc.validate(instance)
    loads = [Fraction(0)] * instance.n
    for e in instance.edges:
        m = alloc.assignment[e.id]
        loads[m] += e.value_on(m)
    return max(loads) if loads else Fraction(0)


def machine_loads(instance: Instance, alloc: Allocation):
    loads = [Fraction(0)] * instance.n
    for e in instance.edges:
        m = alloc.assignment[e.id]
        loads[m] += e.value_on(m)
    return loads


def _zero_endpoint(e: Edge):
    """Machine where this task costs 0, or None; ties go to the lower index."""
    if e.va == 0 and e.vb == 0:
        return min(e.a, e.b)
    if e.va == 0:
        return e.a
    if e.vb == 0:
        return e.b
    return None


def opt_makespan(instance: Instance, cap: int = ENUMERATION_CAP):
    """Exact minimum makespan with one witness allocation.

    Tasks with a zero-cost endpoint are pinned there first: moving such a
    task to its zero endpoint never increases any machine load, so the
    reduction is exact, not heuristic.  The remaining tasks are enumerated
    with branch-and-bound; the enumeration cap applies to them.
    """
    fixed = {}
    free = []
    for e in instance.edges:
        z = _zero_endpoint(e)
        if z is not None:
            fixed[e.id] = z
        elif e.a == e.b:
            fixed[e.id] = e.a
        else:
            free.append(e)

    count = 1
    for _ in free:
        count *= 2
        if count > cap:
            raise InstanceTooLarge(
                f"more than {cap} assignments to enumerate after exact reduction"
            )

    loads = [Fraction(0)] * instance.n
    for tid, m in fixed.items():
        loads[m] += instance.task(tid).value_on(m)

    best_value = None
    best_choice = None
    choice = [0] * len(free)

    def dfs(k, current_max):
        nonlocal best_value, best_choice
        if best_value is not None and current_max >= best_value:
            return
        if k == len(free):
            best_value = current_max
            best_choice = choice.copy()
            return
        e = free[k]
        for idx, m in enumerate(sorted(e.support())):
            v = e.value_on(m)
            loads[m] += v
            choice[k] = idx
            dfs(k + 1, max(current_max, loads[m]))
            loads[m] -= v

    dfs(0, max(loads) if loads else Fraction(0))

    assignment = dict(fixed)
    for k, e in enumerate(free):
        assignment[e.id] = sorted(e.support())[best_choice[k]]
    return best_value, Allocation(assignment)


def naive_opt_makespan(instance: Instance, cap: int = ENUMERATION_CAP):
    """Reduction-free exhaustive minimum; independent check for opt_makespan."""
    count = 1
    for e in instance.edges:
        count *= len(e.support())
        if count > cap:
            raise InstanceTooLarge(f"more than {cap} assignments to enumerate")
    best = None
    best_alloc = None
    stack = [({}, 0)]
    order = instance.edges
    while stack:
        partial, k = stack.pop()
        if k == len(order):
            alloc = Allocation(dict(partial))
            value = makespan(instance, alloc)
            if best is None or value < best:
                best, best_alloc = value, alloc
            continue
        e = order[k]
        for m in sorted(e.support()):
            nxt = dict(partial)
            nxt[e.id] = m
            stack.append((nxt, k + 1))
    return best, best_alloc


# ---------------------------------------------------------------------------
# instance documents
# ---------------------------------------------------------------------------

def instance_to_doc(instance: Instance) -> dict:
    return {
        "n": instance.n,
        "tasks": [
            {
                "id": e.id,
                "a": e.a,
                "b": e.b,
                "va": format_rational(e.va),
                "vb": format_rational(e.vb),
            }
            for e in instance.edges
        ],
    }


def instance_from_doc(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise ParseError("instance document must be an object")
    try:
        n = int(doc["n"])
    except (KeyError, TypeError, ValueError):
        raise ParseError("missing or malformed machine count", field="n") from None
    tasks = doc.get("tasks", [])
    if not isinstance(tasks, list):
        raise ParseError("tasks must be a list", field="tasks")
    edges = []
    for idx, t in enumerate(tasks):
        try:
            edges.append(
                Edge(
                    id=int(t["id"]),
                    a=int(t["a"]),
                    b=int(t["b"]),
                    va=parse_rational(str(t["va"])),
                    vb=parse_rational(str(t["vb"])),
                )
            )
        except ParseError as exc:
            raise ParseError(str(exc), field=f"tasks[{idx}]") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed task entry: {exc}", field=f"tasks[{idx}]") from None
    return Instance(n, edges)


def serialize_instance(instance: Instance) -> str:
    return json.dumps(instance_to_doc(instance), indent=2, sort_keys=True) + "\n"


def parse_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return instance_from_doc(doc)
