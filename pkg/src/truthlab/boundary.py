"""Critical-value (threshold) extraction by bisection, grid quantization,
and the analytic checks run against threshold functions.

For an edge between machines i and j, the threshold psi_{i,j}(z) is the
value below which machine i receives the edge when the opposite side bids
z and every other value is fixed.  Thresholds are reported as exact
rational intervals [lo, hi], never points: a black-box oracle only ever
reveals the threshold to bisection tolerance, and the underlying function
may be discontinuous.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .core import Instance
from .errors import NotMonotone, PreconditionViolated, Unbounded
from .values import DEFAULT_TOL, format_rational, rational

#: probe step and trip threshold for the discontinuity heuristic
DISCONTINUITY_STEP = Fraction(1, 2**20)
DISCONTINUITY_FACTOR = 64


class BoundaryProbe:
    """Bisection prober for one edge's threshold toward one machine.

    The context instance is cloned once; all other values stay fixed while
    the probed edge's two values are overwritten per query.  The oracle
    must be a pure function of the instance.
    """

    def __init__(self, oracle, instance: Instance, edge_id: int, side: int,
                 tolerance: Fraction = DEFAULT_TOL):
        edge = instance.task(edge_id)
        if edge.a == edge.b:
            raise PreconditionViolated("cannot probe a loop: its allocation is forced")
        if side not in edge.support():
            raise PreconditionViolated(f"machine {side} is not an endpoint of task {edge_id}")
        self.oracle = oracle
        self.edge_id = edge_id
        self.side = side
        self.opposite = edge.other(side)
        self.tolerance = rational(tolerance)
        if self.tolerance <= 0:
            raise PreconditionViolated("tolerance must be positive")
        self._work = instance.clone()
        self.n = instance.n
        self._cache = {}
        # direct attribute writes on the working edge keep the probe loop tight
        work_edge = self._work.task(edge_id)
        self._probed_attr = "va" if self.side == work_edge.a else "vb"
        self._opposite_attr = "vb" if self._probed_attr == "va" else "va"
        self._work_edge = work_edge

    def _set_opposite(self, value: Fraction):
        setattr(self._work_edge, self._opposite_attr, value)

    def _wins(self, probed_value: Fraction) -> bool:
        setattr(self._work_edge, self._probed_attr, probed_value)
        alloc = self.oracle(self._work)
        return alloc.assignment[self.edge_id] == self.side

    def critical_value(self, s) -> tuple:
        """Interval [lo, hi] bracketing the threshold at opposite value s.

        The probed side wins strictly below lo and loses strictly above hi;
        hi - lo <= tolerance.  Raises Unbounded when the side still wins at
        the cap n*s + 1, and NotMonotone when pilot probes show a win above
        a loss.
        """
        s = rational(s)
        if s < 0:
            raise PreconditionViolated("opposite value must be >= 0")
        if s in self._cache:
            return self._cache[s]

        self._set_opposite(s)
        cap = Fraction(math.ceil(self.n * s + 1))  # integer cap keeps midpoints dyadic
        win0 = self._wins(Fraction(0))
        win_mid = self._wins(cap / 2)
        win_cap = self._wins(cap)
        if (not win0 and (win_mid or win_cap)) or (win_mid and not win0):
            raise NotMonotone(
                f"task {self.edge_id}: probed side wins above a losing value"
            )
        if win0 and win_cap:
            raise Unbounded(
                f"task {self.edge_id}: still allocated to machine {self.side} at cap {cap}"
            )
        if not win0:
            interval = (Fraction(0), Fraction(0))
            self._cache[s] = interval
            return interval
        if win_mid:
            lo, hi = cap / 2, cap
        else:
            lo, hi = Fraction(0), cap / 2
        while hi - lo > self.tolerance:
            mid = (lo + hi) / 2
            if self._wins(mid):
                lo = mid
            else:
                hi = mid
        interval = (lo, hi)
        self._cache[s] = interval
        return interval

    def mid(self, s) -> Fraction:
        lo, hi = self.critical_value(s)
        return (lo + hi) / 2

    def suspected_discontinuity(self, s) -> bool:
        """Detect a jump near s: thresholds at s +- 2^-20 further apart than 64*2^-20."""
        s = rational(s)
        left = max(Fraction(0), s - DISCONTINUITY_STEP)
        lo_l, hi_l = self.critical_value(left)
        lo_r, hi_r = self.critical_value(s + DISCONTINUITY_STEP)
        spread = (lo_r + hi_r) / 2 - (lo_l + hi_l) / 2
        return abs(spread) > DISCONTINUITY_FACTOR * DISCONTINUITY_STEP


def probe_function(probe: BoundaryProbe, endpoint: str = "lo"):
    """Wrap a probe as a plain threshold function (interval lo/mid/hi)."""
    pick = {"lo": 0, "hi": 1}.get(endpoint)

    def f(x):
        interval = probe.critical_value(x)
        if pick is None:
            return (interval[0] + interval[1]) / 2
        return interval[pick]

    return f


@dataclass
class BoundaryTable:
    """Threshold values floored onto the eps-grid over z in {eps, ..., 1}."""

    eps: Fraction
    values: list  # [(z, psi)] ascending in z
    slope_flags: list = field(default_factory=list)  # z where psi >= n*z

    def key(self) -> tuple:
        """Exact grouping key; tables on the finite grid compare exactly."""
        return tuple(self.values)

    def __getitem__(self, z) -> Fraction:
        z = rational(z)
        for zz, psi in self.values:
            if zz == z:
                return psi
        raise KeyError(z)

    def to_doc(self, edge_id=None):
        doc = {
            "eps": format_rational(self.eps),
            "values": [[format_rational(z), format_rational(p)] for z, p in self.values],
        }
        if self.slope_flags:
            doc["slope_flags"] = [format_rational(z) for z in self.slope_flags]
        if edge_id is not None:
            doc = {"edge": edge_id, **doc}
        return doc

    def to_json(self, edge_id=None):
        return json.dumps(self.to_doc(edge_id), indent=2, sort_keys=True) + "\n"


def quantize(probe: BoundaryProbe, eps) -> BoundaryTable:
    """Build the eps-grid table: floor the threshold at each grid value z.

    The floor is taken from the interval's upper end: a threshold that sits
    exactly on a grid multiple must quantize to itself, and the bisection
    interval may undershoot such a point by up to the tolerance.

    A threshold at or above n*z breaches the bounded-slope premise: the z
    is flagged and, when the search is unbounded outright, the stored value
    is clamped into the table's range (the flag, not the value, carries the
    finding).
    """
    eps = rational(eps)
    if eps <= 0 or (1 / eps).denominator != 1:
        raise PreconditionViolated("1/eps must be a positive integer")
    grid_len = int(1 / eps)
    range_max = probe.n - eps
    values = []
    flags = []
    prev = None
    for k in range(1, grid_len + 1):
        z = k * eps
        try:
            _, hi = probe.critical_value(z)
            psi = eps * (hi // eps)
            if psi >= probe.n * z:
                flags.append(z)
            psi = min(psi, range_max)
        except Unbounded:
            flags.append(z)
            psi = min(eps * ((probe.n * z) // eps), range_max)
        if prev is not None and psi < prev:
            raise NotMonotone(f"quantized threshold decreased at z = {z}")
        prev = psi
        values.append((z, psi))
    return BoundaryTable(eps=eps, values=values, slope_flags=flags)


# ---------------------------------------------------------------------------
# analytic checks
# ---------------------------------------------------------------------------

def _lower_riemann(f, a: Fraction, step: Fraction) -> Fraction:
    """Left sum of a nondecreasing f over [0, a]: a valid lower bound."""
    total = Fraction(0)
    k = 0
    prev = None
    while k * step < a:
        x = k * step
        width = min(step, a - x)
        y = f(x)
        if prev is not None and y < prev:
            raise NotMonotone(f"integrand decreased at x = {x}")
        prev = y
        total += y * width
        k += 1
    return total


def young_check(psi, psi_inv, a, step) -> dict:
    """Check integral(psi, 0..a) + integral(psi_inv, 0..a) >= a^2.

    Both integrals are lower Riemann sums; the pass margin allows the sum
    error bound step * (psi(a) + psi_inv(a)).
    """
    a, step = rational(a), rational(step)
    if a < 0 or step <= 0:
        raise PreconditionViolated("need a >= 0 and step > 0")
    lhs = _lower_riemann(psi, a, step) + _lower_riemann(psi_inv, a, step)
    error_bound = step * (psi(a) + psi_inv(a))
    return {
        "lhs": lhs,
        "target": a * a,
        "error_bound": error_bound,
        "passed": lhs >= a * a - error_bound,
    }


def bounded_slope_check(probe: BoundaryProbe, samples) -> dict:
    """Flag sample points where the threshold reaches n*x.

    A flag certifies that the oracle's ratio is at least n minus the probe
    slack, so the caller treats any flag as a substantive finding.
    """
    flags = []
    checked = []
    for x in samples:
        x = rational(x)
        if x <= 0:
            raise PreconditionViolated("samples must be strictly positive")
        try:
            lo, hi = probe.critical_value(x)
        except Unbounded:
            # still winning at the cap n*x + 1: a fortiori a flag
            cap = Fraction(math.ceil(probe.n * x + 1))
            checked.append((x, cap, cap))
            flags.append((x, cap))
            continue
        checked.append((x, lo, hi))
        if lo >= probe.n * x:
            flags.append((x, lo))
    return {"samples": checked, "flags": flags, "passed": not flags}


def sibling_independence_check(oracle, instance: Instance, edge_id: int,
                               sibling_id: int, perturbations,
                               tolerance=DEFAULT_TOL) -> dict:
    """Re-probe one edge's threshold under value changes of a parallel edge.

    Passes iff all probed intervals overlap in a common point, i.e. the
    threshold does not depend on the sibling's values.
    """
    e = instance.task(edge_id)
    sib = instance.task(sibling_id)
    if e.support() != sib.support() or edge_id == sibling_id:
        raise PreconditionViolated("edges must be distinct and parallel")
    # probe toward endpoint a at the edge's current opposite-side value
    intervals = []
    for pert in [(sib.va, sib.vb)] + list(perturbations):
        work = instance.clone()
        work.set_value(sibling_id, sib.a, rational(pert[0]))
        work.set_value(sibling_id, sib.b, rational(pert[1]))
        probe = BoundaryProbe(oracle, work, edge_id, e.a, tolerance)
        intervals.append(probe.critical_value(e.vb))
    max_lo = max(lo for lo, _ in intervals)
    min_hi = min(hi for _, hi in intervals)
    return {"intervals": intervals, "passed": max_lo <= min_hi}


def lipschitz_check(oracle, instance: Instance, edge_id: int, side: int,
                    other_task_deltas, tolerance=DEFAULT_TOL) -> dict:
    """Threshold shifts are bounded by the l1 change of the other values.

    Each entry of `other_task_deltas` maps task id -> new value on `side`
    for tasks other than the probed edge; the probed threshold may move by
    at most that l1 distance (plus probe slack).
    """
    e = instance.task(edge_id)
    base_probe = BoundaryProbe(oracle, instance, edge_id, side, tolerance)
    s = e.value_on(e.other(side))
    base_lo, base_hi = base_probe.critical_value(s)
    base_mid = (base_lo + base_hi) / 2
    results = []
    ok = True
    for deltas in other_task_deltas:
        if edge_id in deltas:
            raise PreconditionViolated("deltas must not touch the probed edge")
        l1 = Fraction(0)
        work = instance.clone()
        for tid, v in deltas.items():
            v = rational(v)
            l1 += abs(v - instance.task(tid).value_on(side))
            work.set_value(tid, side, v)
        probe = BoundaryProbe(oracle, work, edge_id, side, tolerance)
        lo, hi = probe.critical_value(s)
        mid = (lo + hi) / 2
        shift = abs(mid - base_mid)
        passed = shift <= l1 + 2 * rational(tolerance)
        ok = ok and passed
        results.append({"l1": l1, "shift": shift, "passed": passed})
    return {"base": (base_lo, base_hi), "cases": results, "passed": ok}


def alpha_bounds_check(oracle, instance: Instance, root: int, edge_ids,
                       tolerance=DEFAULT_TOL) -> dict:
    """Check s/n < psi(s) < n*s strictly for each edge; record alpha = mid.

    A failed lower bound is a substantive finding (ratio at least n), not
    an error.
    """
    entries = []
    ok = True
    for tid in edge_ids:
        e = instance.task(tid)
        s = e.value_on(e.other(root))
        if not (0 < s <= 1):
            raise PreconditionViolated(f"task {tid}: leaf value must be in (0, 1]")
        probe = BoundaryProbe(oracle, instance, tid, root, tolerance)
        lo, hi = probe.critical_value(s)
        lower_ok = lo > s / instance.n
        upper_ok = hi < instance.n * s
        ok = ok and lower_ok and upper_ok
        entries.append(
            {
                "edge": tid,
                "s": s,
                "interval": (lo, hi),
                "alpha": (lo + hi) / 2,
                "lower_ok": lower_ok,
                "upper_ok": upper_ok,
            }
        )
    return {"entries": entries, "passed": ok}
