"""Deterministic allocation oracles and their standard payments.

The zoo covers the constructible classes of two-player-per-task truthful
allocation: min-cost (second price per task), weighted affine minimizers
with additive constants, task-independent threshold mechanisms, group
bundling, and constant allocations; plus deliberately broken fixtures
used by the verification suites.

Tie-breaking is global and fixed: among objective/threshold ties the
chosen allocation is lexicographically smallest in (task id ascending,
machine index ascending).  Oracles are pure functions of the instance.
"""

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .core import Allocation, Instance, machine_loads
from .errors import (
    InstanceTooLarge,
    InvalidAllocation,
    ParseError,
    UnsupportedVariant,
)
from .values import format_rational, rational

GROUP_ENUMERATION_CAP = 2**26


class PiecewiseLinear:
    """Monotone nondecreasing piecewise-linear threshold with rational breakpoints.

    Defined by breakpoints [(x0, y0), ..., (xk, yk)] with x0 = 0 and x
    strictly increasing; beyond xk the last segment's slope continues
    (slope 0 for a single breakpoint).
    """

    def __init__(self, breakpoints):
        pts = [(rational(x), rational(y)) for x, y in breakpoints]
        if not pts:
            raise ParseError("threshold needs at least one breakpoint")
        if pts[0][0] != 0:
            raise ParseError("first breakpoint must be at x = 0")
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x1 <= x0:
                raise ParseError("breakpoint x values must strictly increase")
            if y1 < y0:
                raise ParseError("threshold must be nondecreasing")
        if pts[0][1] < 0:
            raise ParseError("threshold must satisfy g(0) >= 0")
        self.points = pts

    def __call__(self, x: Fraction) -> Fraction:
        x = Fraction(x)
        pts = self.points
        if len(pts) == 1:
            return pts[0][1]
        if x >= pts[-1][0]:
            (x0, y0), (x1, y1) = pts[-2], pts[-1]
        else:
            for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
                if x <= x1:
                    break
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def pseudo_inverse(self, y: Fraction) -> Fraction:
        """sup{x >= 0 : g(x) <= y}; raises if the sup is unbounded."""
        y = Fraction(y)
        pts = self.points
        last_slope = (
            Fraction(0)
            if len(pts) == 1
            else (pts[-1][1] - pts[-2][1]) / (pts[-1][0] - pts[-2][0])
        )
        if y >= pts[-1][1]:
            if last_slope == 0:
                raise UnsupportedVariant("critical value unbounded (flat threshold)")
            return pts[-1][0] + (y - pts[-1][1]) / last_slope
        if y < pts[0][1]:
            return Fraction(0)
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if y0 <= y <= y1:
                if y1 == y0:
                    continue  # flat segment: keep scanning for the last x with g <= y
                return x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        # y sits on a trailing flat level followed by a rise
        for (x0, y0), (x1, y1) in reversed(list(zip(pts, pts[1:]))):
            if y0 <= y:
                if y1 == y0:
                    return x1
                return x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        return Fraction(0)

    def to_doc(self):
        return [[format_rational(x), format_rational(y)] for x, y in self.points]


def identity_threshold() -> PiecewiseLinear:
    return PiecewiseLinear([(0, 0), (1, 1)])


@dataclass
class PairConstant:
    """Additive objective constant applied when two tasks are split across machines."""

    tasks: tuple
    c: Fraction


@dataclass
class PatternConstant:
    """Additive constant applied when given tasks take given machines exactly."""

    assign: dict  # task id -> machine
    c: Fraction


@dataclass
class MechanismSpec:
    variant: str
    multipliers: dict = field(default_factory=dict)  # machine -> Fraction > 0
    task_constants: dict = field(default_factory=dict)  # task -> {machine: Fraction >= 0}
    pair_constants: list = field(default_factory=list)  # [PairConstant]
    pattern_constants: list = field(default_factory=list)  # [PatternConstant]
    thresholds: dict = field(default_factory=dict)  # task -> PiecewiseLinear
    groups: list = field(default_factory=list)  # [[task ids]] for bundling
    fixed_side: str = "b"  # constant variant
    fixed_assignment: dict = field(default_factory=dict)  # constant variant overrides
    window: tuple = ()  # window fixture (lo, hi)

    def __post_init__(self):
        for m, lam in self.multipliers.items():
            if lam <= 0:
                raise ParseError(f"multiplier for machine {m} must be > 0")
        for tid, per_machine in self.task_constants.items():
            for m, g in per_machine.items():
                if g < 0:
                    raise ParseError(f"constant for task {tid}, machine {m} negative")

    def multiplier(self, machine: int) -> Fraction:
        return self.multipliers.get(machine, Fraction(1))

    def task_constant(self, task_id: int, machine: int) -> Fraction:
        return self.task_constants.get(task_id, {}).get(machine, Fraction(0))


def vcg() -> MechanismSpec:
    return MechanismSpec(variant="vcg")


def affine_minimizer(
    multipliers=None, task_constants=None, pair_constants=None, pattern_constants=None
) -> MechanismSpec:
    return MechanismSpec(
        variant="affine",
        multipliers={m: rational(v) for m, v in (multipliers or {}).items()},
        task_constants={
            t: {m: rational(v) for m, v in per.items()}
            for t, per in (task_constants or {}).items()
        },
        pair_constants=[
            PairConstant((int(a), int(b)), rational(c)) for (a, b), c in (pair_constants or [])
        ],
        pattern_constants=[
            PatternConstant({int(t): int(m) for t, m in assign.items()}, rational(c))
            for assign, c in (pattern_constants or [])
        ],
    )


def task_independent(thresholds=None) -> MechanismSpec:
    return MechanismSpec(
        variant="task_independent",
        thresholds={int(t): g for t, g in (thresholds or {}).items()},
    )


def bundling(groups, multipliers=None) -> MechanismSpec:
    return MechanismSpec(
        variant="bundling",
        groups=[sorted(int(t) for t in g) for g in groups],
        multipliers={m: rational(v) for m, v in (multipliers or {}).items()},
    )


def constant(side="b", assignment=None) -> MechanismSpec:
    if side not in ("a", "b"):
        raise ParseError("constant side must be 'a' or 'b'")
    return MechanismSpec(
        variant="constant",
        fixed_side=side,
        fixed_assignment={int(t): int(m) for t, m in (assignment or {}).items()},
    )


def window_fixture(lo, hi) -> MechanismSpec:
    """Non-monotone fixture: task goes to endpoint A iff va in [lo, hi]."""
    lo, hi = rational(lo), rational(hi)
    if hi < lo:
        raise ParseError("window needs lo <= hi")
    return MechanismSpec(variant="window", window=(lo, hi))


# ---------------------------------------------------------------------------
# allocation
# ---------------------------------------------------------------------------

def _split_penalty(spec, a_machine, b_machine, c):
    return c if a_machine != b_machine else Fraction(0)


def _referenced_tasks(spec: MechanismSpec) -> frozenset:
    """Tasks that any pair / pattern constant can couple (spec-level, cached)."""
    cached = getattr(spec, "_referenced_cache", None)
    if cached is None:
        touched = set()
        for pc in spec.pair_constants:
            touched.update(pc.tasks)
        for pat in spec.pattern_constants:
            touched.update(pat.assign)
        cached = frozenset(touched)
        object.__setattr__(spec, "_referenced_cache", cached)
    return cached


def _coupled_groups(spec: MechanismSpec, task_ids):
    """Partition the constant-referenced tasks into coupled groups.

    Only tasks named by pair / pattern constants can couple; every other
    task is handled by the separable per-task path.
    """
    present = [t for t in task_ids if t in _referenced_tasks(spec)]
    parent = {t: t for t in present}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)

    in_play = set(present)
    for pc in spec.pair_constants:
        a, b = pc.tasks
        if a in in_play and b in in_play:
            union(a, b)
    for pat in spec.pattern_constants:
        ids = [t for t in pat.assign if t in in_play]
        for a, b in zip(ids, ids[1:]):
            union(a, b)
    groups = {}
    for t in present:
        groups.setdefault(find(t), []).append(t)
    return [sorted(g) for g in groups.values()]


def _group_objective(spec, instance, assign):
    total = Fraction(0)
    for tid, m in assign.items():
        e = instance.task(tid)
        total += spec.multiplier(m) * e.value_on(m) + spec.task_constant(tid, m)
    for pc in spec.pair_constants:
        a, b = pc.tasks
        if a in assign and b in assign:
            total += _split_penalty(spec, assign[a], assign[b], pc.c)
    for pat in spec.pattern_constants:
        if all(t in assign for t in pat.assign):
            if all(assign[t] == m for t, m in pat.assign.items()):
                total += pat.c
    return total


def _allocate_affine_separable(spec: MechanismSpec, instance: Instance) -> Allocation:
    """Per-task argmin; the hot path for probe-heavy sweeps."""
    assignment = {}
    plain = not spec.multipliers and not spec.task_constants
    for e in instance.edges:
        if e.a == e.b:
            assignment[e.id] = e.a
        elif plain:
            if e.va < e.vb:
                assignment[e.id] = e.a
            elif e.vb < e.va:
                assignment[e.id] = e.b
            else:
                assignment[e.id] = e.a if e.a < e.b else e.b
        else:
            ca = spec.multiplier(e.a) * e.va + spec.task_constant(e.id, e.a)
            cb = spec.multiplier(e.b) * e.vb + spec.task_constant(e.id, e.b)
            if ca < cb:
                assignment[e.id] = e.a
            elif cb < ca:
                assignment[e.id] = e.b
            else:
                assignment[e.id] = e.a if e.a < e.b else e.b
    return Allocation(assignment)


def _allocate_affine(spec: MechanismSpec, instance: Instance) -> Allocation:
    if not spec.pair_constants and not spec.pattern_constants:
        return _allocate_affine_separable(spec, instance)
    referenced = _referenced_tasks(spec)
    plain = not spec.multipliers and not spec.task_constants
    assignment = {}
    for e in instance.edges:
        if e.id in referenced:
            continue
        if e.a == e.b:
            assignment[e.id] = e.a
        elif plain:
            if e.va < e.vb:
                assignment[e.id] = e.a
            elif e.vb < e.va:
                assignment[e.id] = e.b
            else:
                assignment[e.id] = e.a if e.a < e.b else e.b
        else:
            ca = spec.multiplier(e.a) * e.va + spec.task_constant(e.id, e.a)
            cb = spec.multiplier(e.b) * e.vb + spec.task_constant(e.id, e.b)
            if ca < cb or (ca == cb and e.a < e.b):
                assignment[e.id] = e.a
            else:
                assignment[e.id] = e.b
    for group in _coupled_groups(spec, instance.task_ids()):
        if len(group) == 1:
            tid = group[0]
            e = instance.task(tid)
            best_m, best_v = None, None
            for m in sorted(e.support()):
                v = spec.multiplier(m) * e.value_on(m) + spec.task_constant(tid, m)
                if best_v is None or v < best_v:
                    best_m, best_v = m, v
            assignment[tid] = best_m
            continue
        supports = [sorted(instance.task(t).support()) for t in group]
        count = 1
        for s in supports:
            count *= len(s)
            if count > GROUP_ENUMERATION_CAP:
                raise InstanceTooLarge("coupled task group too large to enumerate")
        best_assign, best_v = None, None
        # itertools.product over ascending machine lists yields candidates in
        # lexicographic order, so the first strict minimum is the tie-break winner
        for combo in itertools.product(*supports):
            cand = dict(zip(group, combo))
            v = _group_objective(spec, instance, cand)
            if best_v is None or v < best_v:
                best_assign, best_v = cand, v
        assignment.update(best_assign)
    return Allocation(assignment)


def _allocate_task_independent(spec: MechanismSpec, instance: Instance) -> Allocation:
    assignment = {}
    for e in instance.edges:
        if e.a == e.b:
            assignment[e.id] = e.a
            continue
        g = spec.thresholds.get(e.id) or identity_threshold()
        assignment[e.id] = e.a if e.va < g(e.vb) else e.b
    return Allocation(assignment)


def _allocate_bundling(spec: MechanismSpec, instance: Instance) -> Allocation:
    assignment = {}
    grouped = set()
    present = set(instance.task_ids())
    for group in spec.groups:
        members = [t for t in group if t in present]
        if not members:
            continue
        edges = [instance.task(t) for t in members]
        if any(e.a == e.b for e in edges):
            raise InvalidAllocation("bundling group may not contain loops")
        cost_a = sum(spec.multiplier(e.a) * e.va for e in edges)
        cost_b = sum(spec.multiplier(e.b) * e.vb for e in edges)
        if cost_a < cost_b:
            side = "a"
        elif cost_b < cost_a:
            side = "b"
        else:
            # tie: lexicographically smaller assignment vector
            vec_a = [e.a for e in sorted(edges, key=lambda e: e.id)]
            vec_b = [e.b for e in sorted(edges, key=lambda e: e.id)]
            side = "a" if vec_a <= vec_b else "b"
        for e in edges:
            assignment[e.id] = e.a if side == "a" else e.b
            grouped.add(e.id)
    for e in instance.edges:
        if e.id in grouped:
            continue
        if e.a == e.b:
            assignment[e.id] = e.a
            continue
        ca = spec.multiplier(e.a) * e.va
        cb = spec.multiplier(e.b) * e.vb
        assignment[e.id] = e.a if ca < cb or (ca == cb and e.a < e.b) else e.b
    return Allocation(assignment)


def _allocate_constant(spec: MechanismSpec, instance: Instance) -> Allocation:
    assignment = {}
    for e in instance.edges:
        if e.a == e.b:
            assignment[e.id] = e.a
        elif e.id in spec.fixed_assignment:
            assignment[e.id] = spec.fixed_assignment[e.id]
        else:
            assignment[e.id] = e.a if spec.fixed_side == "a" else e.b
    alloc = Allocation(assignment)
    alloc.validate(instance)
    return alloc


def _allocate_window(spec: MechanismSpec, instance: Instance) -> Allocation:
    lo, hi = spec.window
    assignment = {}
    for e in instance.edges:
        if e.a == e.b:
            assignment[e.id] = e.a
        else:
            assignment[e.id] = e.a if lo <= e.va <= hi else e.b
    return Allocation(assignment)


def allocate(spec: MechanismSpec, instance: Instance) -> Allocation:
    """Run the oracle; deterministic, bit-for-bit reproducible."""
    if spec.variant == "vcg":
        return _allocate_affine(MechanismSpec(variant="affine"), instance)
    if spec.variant == "affine":
        return _allocate_affine(spec, instance)
    if spec.variant == "task_independent":
        return _allocate_task_independent(spec, instance)
    if spec.variant == "bundling":
        return _allocate_bundling(spec, instance)
    if spec.variant == "constant":
        return _allocate_constant(spec, instance)
    if spec.variant == "window":
        return _allocate_window(spec, instance)
    raise UnsupportedVariant(f"unknown variant {spec.variant!r}")


def oracle(spec: MechanismSpec):
    """Bind a spec into a single-argument allocation oracle."""
    return lambda instance: allocate(spec, instance)


# ---------------------------------------------------------------------------
# payments
# ---------------------------------------------------------------------------

def _affine_objective(spec, instance, alloc: Allocation) -> Fraction:
    loads = machine_loads(instance, alloc)
    total = sum(
        (spec.multiplier(m) * loads[m] for m in range(instance.n)), Fraction(0)
    )
    for e in instance.edges:
        total += spec.task_constant(e.id, alloc.assignment[e.id])
    for pc in spec.pair_constants:
        a, b = pc.tasks
        if a in alloc.assignment and b in alloc.assignment:
            total += _split_penalty(spec, alloc.assignment[a], alloc.assignment[b], pc.c)
    for pat in spec.pattern_constants:
        if all(t in alloc.assignment for t in pat.assign):
            if all(alloc.assignment[t] == m for t, m in pat.assign.items()):
                total += pat.c
    return total


def _others_objective(spec, instance, alloc, machine) -> Fraction:
    """Objective with machine's own weighted load removed."""
    total = _affine_objective(spec, instance, alloc)
    own = sum(
        (
            instance.task(t).value_on(m)
            for t, m in alloc.assignment.items()
            if m == machine
        ),
        Fraction(0),
    )
    return total - spec.multiplier(machine) * own


def _min_objective_avoiding(spec, instance, machine) -> Fraction:
    """Min of Sum_{i != machine} lambda_i load_i + constants, machine banned.

    Loops at `machine` stay pinned there (their load is excluded from the
    sum by construction); every other task must use its other endpoint or
    be enumerated over support minus the banned machine.
    """
    best = {"value": None}
    task_ids = instance.task_ids()

    def choices(tid):
        e = instance.task(tid)
        if e.a == e.b:
            return [e.a]
        opts = [m for m in sorted(e.support()) if m != machine]
        if not opts:
            raise UnsupportedVariant("no feasible allocation avoiding the machine")
        return opts

    groups = _coupled_groups(spec, task_ids)
    covered = {t for g in groups for t in g}
    groups += [[t] for t in task_ids if t not in covered]
    total = Fraction(0)
    for group in groups:
        opts = [choices(t) for t in group]
        count = 1
        for o in opts:
            count *= len(o)
            if count > GROUP_ENUMERATION_CAP:
                raise InstanceTooLarge("externality enumeration too large")
        group_best = None
        for combo in itertools.product(*opts):
            cand = dict(zip(group, combo))
            v = _group_objective(spec, instance, cand)
            v -= sum(
                (
                    spec.multiplier(machine) * instance.task(t).value_on(m)
                    for t, m in cand.items()
                    if m == machine
                ),
                Fraction(0),
            )
            if group_best is None or v < group_best:
                group_best = v
        total += group_best
    return total


def payments(spec: MechanismSpec, instance: Instance, alloc: Allocation) -> dict:
    """Per-machine payments for the variants with closed forms.

    VCG / affine minimizers use the externality form with the spec's
    weights; task-independent mechanisms pay the per-task critical value.
    """
    if spec.variant in ("vcg", "affine"):
        eff = spec if spec.variant == "affine" else MechanismSpec(variant="affine")
        out = {}
        for i in range(instance.n):
            h = _min_objective_avoiding(eff, instance, i)
            out[i] = (h - _others_objective(eff, instance, alloc, i)) / eff.multiplier(i)
        return out
    if spec.variant == "task_independent":
        out = {i: Fraction(0) for i in range(instance.n)}
        for e in instance.edges:
            if e.a == e.b:
                continue
            g = spec.thresholds.get(e.id) or identity_threshold()
            winner = alloc.assignment[e.id]
            if winner == e.a:
                out[e.a] += g(e.vb)
            else:
                out[e.b] += g.pseudo_inverse(e.va)
        return out
    raise UnsupportedVariant(f"payments undefined for variant {spec.variant!r}")


@dataclass
class UtilityComparison:
    machine: int
    truth_utility: Fraction
    deviation_utility: Fraction
    truthful: bool


def truthfulness_probe(
    spec: MechanismSpec,
    instance: Instance,
    machine: int,
    deviation: dict,
    payment_fn=None,
) -> UtilityComparison:
    """Compare the machine's utility under truth and under one deviation.

    `deviation` maps task id -> reported value on the machine's side; true
    values are the instance's.  `payment_fn(instance, alloc) -> dict` may
    replace the standard payments (used to exercise broken fixtures).
    """
    pay = payment_fn or (lambda inst, alloc: payments(spec, inst, alloc))

    def utility(bid_instance):
        alloc = allocate(spec, bid_instance)
        p = pay(bid_instance, alloc)[machine]
        true_cost = sum(
            (
                instance.task(t).value_on(m)
                for t, m in alloc.assignment.items()
                if m == machine
            ),
            Fraction(0),
        )
        return p - true_cost

    truth = utility(instance)
    deviated = instance.clone()
    for tid, value in deviation.items():
        deviated.set_value(tid, machine, rational(value))
    dev = utility(deviated)
    return UtilityComparison(machine, truth, dev, truth >= dev)


# ---------------------------------------------------------------------------
# mechanism documents
# ---------------------------------------------------------------------------

def mechanism_to_doc(spec: MechanismSpec) -> dict:
    doc = {"variant": spec.variant}
    if spec.multipliers:
        doc["multipliers"] = {
            str(m): format_rational(v) for m, v in sorted(spec.multipliers.items())
        }
    if spec.task_constants:
        doc["task_constants"] = {
            str(t): {str(m): format_rational(v) for m, v in sorted(per.items())}
            for t, per in sorted(spec.task_constants.items())
        }
    if spec.pair_constants:
        doc["pair_constants"] = [
            {"tasks": list(pc.tasks), "c": format_rational(pc.c)}
            for pc in spec.pair_constants
        ]
    if spec.pattern_constants:
        doc["pattern_constants"] = [
            {
                "assign": {str(t): m for t, m in sorted(pat.assign.items())},
                "c": format_rational(pat.c),
            }
            for pat in spec.pattern_constants
        ]
    if spec.thresholds:
        doc["thresholds"] = {
            str(t): g.to_doc() for t, g in sorted(spec.thresholds.items())
        }
    if spec.groups:
        doc["groups"] = spec.groups
    if spec.variant == "constant":
        doc["side"] = spec.fixed_side
        if spec.fixed_assignment:
            doc["assignment"] = {
                str(t): m for t, m in sorted(spec.fixed_assignment.items())
            }
    if spec.variant == "window":
        doc["lo"] = format_rational(spec.window[0])
        doc["hi"] = format_rational(spec.window[1])
    return doc


def mechanism_from_doc(doc: dict) -> MechanismSpec:
    if not isinstance(doc, dict) or "variant" not in doc:
        raise ParseError("mechanism document needs a 'variant' tag")
    variant = doc["variant"]
    try:
        if variant == "vcg":
            return vcg()
        if variant == "affine":
            return affine_minimizer(
                multipliers={int(m): v for m, v in doc.get("multipliers", {}).items()},
                task_constants={
                    int(t): {int(m): v for m, v in per.items()}
                    for t, per in doc.get("task_constants", {}).items()
                },
                pair_constants=[
                    (tuple(pc["tasks"]), pc["c"]) for pc in doc.get("pair_constants", [])
                ],
                pattern_constants=[
                    (pat["assign"], pat["c"]) for pat in doc.get("pattern_constants", [])
                ],
            )
        if variant == "task_independent":
            return task_independent(
                {
                    int(t): PiecewiseLinear(bps)
                    for t, bps in doc.get("thresholds", {}).items()
                }
            )
        if variant == "bundling":
            return bundling(
                doc.get("groups", []),
                multipliers={int(m): v for m, v in doc.get("multipliers", {}).items()},
            )
        if variant == "constant":
            return constant(doc.get("side", "b"), doc.get("assignment", {}))
        if variant == "window":
            return window_fixture(doc["lo"], doc["hi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed mechanism document: {exc}") from None
    raise ParseError(f"unknown mechanism variant {variant!r}", field="variant")


def serialize_mechanism(spec: MechanismSpec) -> str:
    return json.dumps(mechanism_to_doc(spec), indent=2, sort_keys=True) + "\n"


def parse_mechanism(text: str) -> MechanismSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return mechanism_from_doc(doc)
