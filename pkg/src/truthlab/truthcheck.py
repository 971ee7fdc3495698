"""Weak-monotonicity verification and the standard lower-bound tool checks.

A deviating machine i with truthful values t and reported values t' must
satisfy  sum_j (a'_ij - a_ij)(t'_ij - t_ij) <= 0  where a_ij indicates
that task j went to machine i.  All sums are exact rationals.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .core import Instance, Edge
from .errors import BadDeviation, PreconditionViolated
from .values import format_rational, random_dyadic, rational, stream

#: nudge applied to values that land exactly on an endpoint tie
TIE_NUDGE = Fraction(1, 2**20)


@dataclass
class WmonViolation:
    machine: int
    base_values: dict  # task -> value on the machine's side
    deviated_values: dict
    total: Fraction  # the violated sum, > 0 exactly

    def to_doc(self):
        return {
            "machine": self.machine,
            "base": {str(t): format_rational(v) for t, v in sorted(self.base_values.items())},
            "deviated": {
                str(t): format_rational(v) for t, v in sorted(self.deviated_values.items())
            },
            "sum": format_rational(self.total),
        }


def _machine_side_values(instance: Instance, machine: int) -> dict:
    out = {}
    for e in instance.edges:
        if machine in e.support():
            out[e.id] = e.value_on(machine)
    return out


def wmon_pair(oracle, instance: Instance, deviated_values: dict, machine: int):
    """Evaluate the monotonicity sum for one (t, t') pair.

    `deviated_values` maps task id -> new value on the machine's side; all
    listed tasks must be incident to the machine.  Returns None on pass or
    a WmonViolation when the sum is strictly positive.
    """
    base = _machine_side_values(instance, machine)
    for tid in deviated_values:
        if tid not in base:
            raise BadDeviation(f"task {tid} is not incident to machine {machine}")

    deviated = instance.clone()
    for tid, v in deviated_values.items():
        deviated.set_value(tid, machine, rational(v))

    a = oracle(instance)
    a_prime = oracle(deviated)
    total = Fraction(0)
    for tid, old in base.items():
        new = rational(deviated_values.get(tid, old))
        total += (a_prime.indicator(machine, tid) - a.indicator(machine, tid)) * (new - old)
    if total > 0:
        full_dev = dict(base)
        full_dev.update({t: rational(v) for t, v in deviated_values.items()})
        return WmonViolation(machine, base, full_dev, total)
    return None


@dataclass
class SamplerConfig:
    """How wmon_sweep draws (t, t', i) triples.

    mode "random": seeded dyadic sampling (denominators <= 2^denom_log).
    mode "grid":   deterministic coarse-lattice enumeration, one deviated
                   task per trial.
    When base_instance is given its values are kept and only deviations are
    sampled; otherwise fresh n-machine, m-task instances are drawn.
    """

    n: int = 3
    m: int = 4
    seed: int = 0
    mode: str = "random"
    value_cap: Fraction = Fraction(2)
    denom_log: int = 12
    base_instance: Instance = None


@dataclass
class SweepReport:
    trials: int
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations

    def to_doc(self):
        return {
            "trials": self.trials,
            "violations": [v.to_doc() for v in self.violations],
        }

    def to_json(self):
        return json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n"


def _random_instance(rng, config: SamplerConfig) -> Instance:
    edges = []
    for tid in range(config.m):
        a = rng.randrange(config.n)
        b = rng.randrange(config.n)
        while b == a:
            b = rng.randrange(config.n)
        a, b = min(a, b), max(a, b)
        va = random_dyadic(rng, config.value_cap, config.denom_log)
        vb = random_dyadic(rng, config.value_cap, config.denom_log)
        if vb == va:
            vb += TIE_NUDGE  # keep sampled pairs off exact argmin ties
        edges.append(Edge(tid, a, b, va, vb))
    return Instance(config.n, edges)


def _grid_trial(index: int, config: SamplerConfig):
    """Deterministic lattice walk: task, base level, deviated level."""
    base = config.base_instance
    if base is None:
        raise PreconditionViolated("grid mode needs a base instance")
    steps = 16
    unit = config.value_cap / steps
    m = len(base.edges)
    tid_idx = index % m
    rest = index // m
    lo = rest % (steps + 1)
    hi = (rest // (steps + 1)) % (steps + 1)
    edge = base.edges[tid_idx]
    machine = edge.a
    inst = base.clone()
    inst.set_value(edge.id, machine, lo * unit)
    return inst, machine, {edge.id: hi * unit}


def wmon_sweep(oracle, config: SamplerConfig, trials: int) -> SweepReport:
    """Run wmon_pair on sampled (t, t', i); report every violation found."""
    if trials < 1:
        raise PreconditionViolated("trials must be >= 1")
    report = SweepReport(trials=trials)
    for k in range(trials):
        if config.mode == "grid":
            inst, machine, deviation = _grid_trial(k, config)
        else:
            rng = stream(config.seed, 1001, k)
            inst = (
                config.base_instance.clone()
                if config.base_instance is not None
                else _random_instance(rng, config)
            )
            machines = [i for i in range(inst.n) if inst.machine_tasks(i)]
            machine = machines[rng.randrange(len(machines))]
            incident = inst.machine_tasks(machine)
            count = rng.randint(1, len(incident))
            chosen = rng.sample(incident, count)
            deviation = {}
            for tid in chosen:
                v = random_dyadic(rng, config.value_cap, config.denom_log)
                e = inst.task(tid)
                if e.a != e.b and v == e.value_on(e.other(machine)):
                    v += TIE_NUDGE
                deviation[tid] = v
        violation = wmon_pair(oracle, inst, deviation, machine)
        if violation is not None:
            report.violations.append(violation)
    report.violations.sort(key=lambda v: (v.machine, format_rational(v.total)))
    return report


def restriction_check(oracle, instance: Instance, fixed_tasks, trials: int,
                      seed: int = 0, denom_log: int = 12) -> SweepReport:
    """Sweep deviations that touch only tasks outside `fixed_tasks`.

    Freezing a task set and deviating on the complement must preserve
    monotonicity whenever the unrestricted allocation is monotone.
    """
    fixed = set(fixed_tasks)
    unknown = fixed - set(instance.task_ids())
    if unknown:
        raise PreconditionViolated(f"fixed tasks not in instance: {sorted(unknown)}")
    free = [t for t in instance.task_ids() if t not in fixed]
    report = SweepReport(trials=trials)
    if not free:
        return report  # vacuous: no deviations possible
    cap = Fraction(2)
    for k in range(trials):
        rng = stream(seed, 2002, k)
        candidates = sorted(
            {m for t in free for m in instance.task(t).support()}
        )
        machine = candidates[rng.randrange(len(candidates))]
        incident = [t for t in free if machine in instance.task(t).support()]
        if not incident:
            continue
        chosen = rng.sample(incident, rng.randint(1, len(incident)))
        deviation = {t: random_dyadic(rng, cap, denom_log) for t in chosen}
        violation = wmon_pair(oracle, instance, deviation, machine)
        if violation is not None:
            report.violations.append(violation)
    return report


@dataclass
class AgreementViolation:
    machine: int
    changed_tasks: list

    def to_doc(self):
        return {"machine": self.machine, "changed": sorted(self.changed_tasks)}


def agreement_check(oracle, instance: Instance, machine: int,
                    decrease_set, increase_set, deltas: dict):
    """Decreasing won tasks and increasing lost tasks must not change them.

    `deltas` maps task id -> new value on the machine's side; values must
    strictly decrease on the decrease set and strictly increase on the
    increase set.  Returns None on pass or an AgreementViolation.
    """
    decrease_set, increase_set = set(decrease_set), set(increase_set)
    base_alloc = oracle(instance)
    for tid in decrease_set:
        if base_alloc.assignment[tid] != machine:
            raise PreconditionViolated(f"task {tid} is not allocated to machine {machine}")
    for tid in increase_set:
        if base_alloc.assignment[tid] == machine:
            raise PreconditionViolated(f"task {tid} is allocated to machine {machine}")
    touched = decrease_set | increase_set
    if set(deltas) != touched:
        raise PreconditionViolated("deltas must cover exactly the two task sets")
    deviated = instance.clone()
    for tid, v in deltas.items():
        v = rational(v)
        old = instance.task(tid).value_on(machine)
        if tid in decrease_set and not v < old:
            raise PreconditionViolated(f"task {tid} value must strictly decrease")
        if tid in increase_set and not v > old:
            raise PreconditionViolated(f"task {tid} value must strictly increase")
        deviated.set_value(tid, machine, v)
    new_alloc = oracle(deviated)
    changed = [
        tid
        for tid in touched
        if new_alloc.indicator(machine, tid) != base_alloc.indicator(machine, tid)
    ]
    if changed:
        return AgreementViolation(machine, changed)
    return None
