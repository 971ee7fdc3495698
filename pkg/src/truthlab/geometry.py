"""Allocation-region geometry: facet probing, two-task shape taxonomy,
box / nice-star / chopped-off-box detection, corner shifts, and the
rectangle-free bipartite utility used by the two-leaf analysis.

For a star P with the leaf values fixed, the root's all-of-P region
R_P in root-value space is (by weak monotonicity) an orthotope with
diagonal cuts of the form sum_{i in I} t_i <= c_I.  Everything here is
probe-based at a declared resolution; reports carry that resolution.
"""

import itertools
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .boundary import BoundaryProbe
from .core import Instance, Star
from .errors import (
    DeltaTooLarge,
    GridTooFine,
    NegativeValue,
    NotMonotone,
    PreconditionViolated,
    ResolutionTooCoarse,
)
from .values import DEFAULT_TOL, format_rational, rational, stream

PROBE_BUDGET_DEFAULT = 4096


class PairShape(Enum):
    CROSSING = "Crossing"
    QUASI_BUNDLING = "QuasiBundling"
    QUASI_FLIPPING = "QuasiFlipping"
    HALF_BUNDLING_AT_FIRST = "HalfBundlingAtFirst"
    HALF_BUNDLING_AT_SECOND = "HalfBundlingAtSecond"
    FULLY_BUNDLING = "FullyBundling"
    DEGENERATE = "Degenerate"
    UNKNOWN = "Unknown"


@dataclass
class RegionFacets:
    star: Star
    resolution: Fraction
    facets: dict  # frozenset of positions in star.edges -> c_I

    def facet(self, positions):
        return self.facets.get(frozenset(positions))

    def to_doc(self):
        return {
            "root": self.star.root,
            "edges": list(self.star.edges),
            "resolution": format_rational(self.resolution),
            "facets": [
                {"tasks": sorted(self.star.edges[i] for i in key),
                 "c": format_rational(c)}
                for key, c in sorted(self.facets.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
            ],
        }


@dataclass
class BoxReport:
    star: Star
    delta: Fraction
    thresholds: dict  # task id -> psi mid used for the shift
    probe_point: dict  # task id -> probed root value
    is_box: bool
    allocation: dict  # task id -> machine at the probe point

    def to_doc(self):
        return {
            "root": self.star.root,
            "edges": list(self.star.edges),
            "delta": format_rational(self.delta),
            "thresholds": {str(t): format_rational(v) for t, v in sorted(self.thresholds.items())},
            "probe_point": {str(t): format_rational(v) for t, v in sorted(self.probe_point.items())},
            "verdict": "box" if self.is_box else "notBox",
            "allocation": {str(t): m for t, m in sorted(self.allocation.items())},
        }


class _RegionMembership:
    """All-of-P-to-root membership oracle over root-value space."""

    def __init__(self, oracle, instance: Instance, star: Star):
        self.oracle = oracle
        self.star = star
        self.work = instance.clone()
        self.root = star.root
        star.leaves(instance)  # validates star structure

    def __call__(self, point: dict) -> bool:
        for tid, v in point.items():
            self.work.set_value(tid, self.root, v)
        alloc = self.oracle(self.work)
        return all(alloc.assignment[t] == self.root for t in self.star.edges)

    def allocation(self, point: dict):
        for tid, v in point.items():
            self.work.set_value(tid, self.root, v)
        return self.oracle(self.work)


def _ray_exit(member, star, positions, cap: Fraction, resolution: Fraction):
    """sup{tau : tau * 1_I in region} bracketed to the resolution."""
    ids = star.edges

    def point(tau):
        return {ids[i]: (tau if i in positions else Fraction(0)) for i in range(len(ids))}

    if not member(point(Fraction(0))):
        return Fraction(0), Fraction(0)
    lo, hi = Fraction(0), cap
    if member(point(cap)):
        raise NotMonotone(f"region unbounded along ray {sorted(positions)} up to {cap}")
    while hi - lo > resolution:
        mid = (lo + hi) / 2
        if member(point(mid)):
            lo = mid
        else:
            hi = mid
    return lo, hi


def probe_region(oracle, instance: Instance, star: Star, resolution,
                 seed: int = 0, budget: int = PROBE_BUDGET_DEFAULT) -> RegionFacets:
    """Estimate the facet map of R_P by center-ray bisection.

    For each nonempty I the exit along direction 1_I is bisected; a
    diagonal facet is claimed only when the exit is strictly deeper than
    every facet already established on proper subsets, and each claim is
    cross-validated at seeded points on the claimed hyperplane.  Facets
    that do not cross the center ray are not detected: the report is a
    certificate at its stated resolution, not a symbolic region.
    """
    resolution = rational(resolution)
    if resolution <= 0:
        raise PreconditionViolated("resolution must be positive")
    k = len(star.edges)
    if not 1 <= k <= 4:
        raise PreconditionViolated("facet maps supported for stars of 1..4 edges")
    member = _RegionMembership(oracle, instance, star)
    leaf_values = [
        instance.task(t).value_on(instance.task(t).other(star.root)) for t in star.edges
    ]
    cap = Fraction(sum(instance.n * s for s in leaf_values) + 1)

    facets = {}
    calls = 0
    for size in range(1, k + 1):
        for positions in itertools.combinations(range(k), size):
            pos = frozenset(positions)
            lo, hi = _ray_exit(member, star, pos, cap, resolution)
            calls += 1
            tau = (lo + hi) / 2
            claim = len(pos) * tau
            if size == 1:
                facets[pos] = claim
                continue
            # exit explained by established facets on proper subsets?
            predicted = min(
                (facets[sub] / len(sub)
                 for sub in facets
                 if sub < pos),
                default=None,
            )
            if predicted is not None and tau >= predicted - 2 * resolution:
                continue
            _validate_facet(member, star, pos, claim, facets, resolution, seed)
            facets[pos] = claim
            if calls > budget:
                raise GridTooFine("facet probing exceeded its budget")
    report = RegionFacets(star=star, resolution=resolution, facets=facets)
    _check_consistency(report)
    return report


def _validate_facet(member, star, positions, c, facets, resolution, seed):
    """Probe 2k seeded points on the claimed plane: inside below, outside above."""
    ids = star.edges
    k = len(ids)
    rng = stream(seed, 3003, *sorted(positions))
    size = len(positions)
    for trial in range(2 * k):
        weights = [rng.randint(1, 8) for _ in range(size)]
        total = sum(weights)
        coords = {}
        for w, i in zip(weights, sorted(positions)):
            coords[i] = c * w / total
        # stay inside single-facet bounds with a margin
        if any(
            frozenset([i]) in facets and coords[i] > facets[frozenset([i])] - 2 * resolution
            for i in coords
        ):
            continue
        inner = {
            ids[i]: max(Fraction(0), coords.get(i, Fraction(0)) - (resolution if i in positions else Fraction(0)))
            for i in range(k)
        }
        outer = {
            ids[i]: coords.get(i, Fraction(0)) + (resolution if i in positions else Fraction(0))
            for i in range(k)
        }
        if not member(inner) or member(outer):
            raise ResolutionTooCoarse(
                f"facet {sorted(positions)} failed cross-validation at resolution {resolution}"
            )


def _check_consistency(report: RegionFacets):
    singles = {next(iter(key)): c for key, c in report.facets.items() if len(key) == 1}
    slack = 4 * report.resolution * len(report.star.edges)
    for key, c in report.facets.items():
        if len(key) < 2:
            continue
        if all(i in singles for i in key):
            bound = sum(singles[i] for i in key)
            if c > bound + slack:
                raise ResolutionTooCoarse(
                    f"facet {sorted(key)} exceeds the sum of its single facets"
                )


# ---------------------------------------------------------------------------
# two-task shape classification
# ---------------------------------------------------------------------------

def classify_pair(oracle, instance: Instance, pair, resolution=Fraction(1, 2**8),
                  slope_samples: int = 5) -> dict:
    """Classify the joint allocation picture of two tasks for the root.

    Returns a report with the PairShape, the two axis exits, and, when a
    diagonal cut is detected, its value, depth and a slope check along the
    cut (every probed point must flip membership across the -1 plane).
    """
    resolution = rational(resolution)
    t1, t2 = pair
    e1, e2 = instance.task(t1), instance.task(t2)
    roots = e1.support() & e2.support()
    if not roots:
        raise PreconditionViolated("tasks share no machine to act as root")
    root = min(roots)
    star = Star(root, [t1, t2])
    member = _RegionMembership(oracle, instance, star)

    def cat(x, y):
        alloc = member.allocation({t1: x, t2: y})
        return (alloc.assignment[t1] == root, alloc.assignment[t2] == root)

    s1 = e1.value_on(e1.other(root))
    s2 = e2.value_on(e2.other(root))
    cap = Fraction(instance.n * (s1 + s2) + 1)

    lo1, hi1 = _ray_exit(member, star, frozenset([0]), cap, resolution)
    lo2, hi2 = _ray_exit(member, star, frozenset([1]), cap, resolution)
    tau1, tau2 = (lo1 + hi1) / 2, (lo2 + hi2) / 2
    report = {"root": root, "tasks": [t1, t2], "tau1": tau1, "tau2": tau2,
              "resolution": resolution}

    if tau1 <= 2 * resolution or tau2 <= 2 * resolution:
        report["shape"] = PairShape.DEGENERATE
        return report

    g = 2 * resolution
    corner_in = member({t1: tau1 - g, t2: tau2 - g})
    if corner_in:
        both_out = cat(tau1 + g, tau2 + g)
        if both_out == (False, False):
            report["shape"] = PairShape.CROSSING
        elif both_out in ((True, False), (False, True)):
            # measure the flip band along the corner diagonal
            d_lo, d_hi = Fraction(0), cap
            while d_hi - d_lo > resolution:
                mid = (d_lo + d_hi) / 2
                if cat(tau1 + mid, tau2 + mid) == (False, False):
                    d_hi = mid
                else:
                    d_lo = mid
            report["flip_gap"] = (d_lo + d_hi) / 2
            report["shape"] = (
                PairShape.QUASI_FLIPPING if d_lo > resolution else PairShape.CROSSING
            )
        else:
            report["shape"] = PairShape.UNKNOWN
        return report

    # corner missing: bundling-type cut; locate it along the corner diagonal
    sig_lo, sig_hi = Fraction(0), min(tau1, tau2)
    if member({t1: tau1 - sig_lo, t2: tau2 - sig_lo}):
        report["shape"] = PairShape.UNKNOWN
        return report
    while sig_hi - sig_lo > resolution / 2:
        mid = (sig_lo + sig_hi) / 2
        if member({t1: tau1 - mid, t2: tau2 - mid}):
            sig_hi = mid
        else:
            sig_lo = mid
    sigma = (sig_lo + sig_hi) / 2
    cut = tau1 + tau2 - 2 * sigma
    depth = 2 * sigma
    report["cut_value"] = cut
    report["cut_depth"] = depth

    slope_ok = _validate_cut_slope(
        member, t1, t2, tau1, tau2, cut, resolution, slope_samples
    )
    report["slope_check"] = slope_ok
    if not slope_ok["passed"]:
        report["shape"] = PairShape.UNKNOWN
        return report

    half1 = abs(tau1 - cut) <= 4 * resolution  # cut reaches the t1 axis: no own facet
    half2 = abs(tau2 - cut) <= 4 * resolution
    if half1 and half2:
        report["shape"] = PairShape.FULLY_BUNDLING
    elif half1:
        report["shape"] = PairShape.HALF_BUNDLING_AT_FIRST
    elif half2:
        report["shape"] = PairShape.HALF_BUNDLING_AT_SECOND
    else:
        report["shape"] = PairShape.QUASI_BUNDLING
    return report


def _validate_cut_slope(member, t1, t2, tau1, tau2, cut, resolution, samples):
    """Check the cut is a -1 line: membership flips across it at probed x."""
    x_min = max(cut - tau2, Fraction(0)) + 4 * resolution
    x_max = min(tau1, cut) - 4 * resolution
    points = []
    ok = True
    if x_max <= x_min:
        return {"points": [], "passed": True}  # cut shorter than the margin: nothing to probe
    for i in range(samples):
        x = x_min + (x_max - x_min) * Fraction(2 * i + 1, 2 * samples)
        y = cut - x
        inner = member({t1: x - resolution, t2: y - resolution})
        outer = member({t1: x + resolution, t2: y + resolution})
        good = inner and not outer
        ok = ok and good
        points.append({"x": x, "inside_ok": inner, "outside_ok": not outer})
    return {"points": points, "passed": ok}


# ---------------------------------------------------------------------------
# boxes, nice stars, corner shifts
# ---------------------------------------------------------------------------

def star_thresholds(oracle, instance: Instance, star: Star,
                    tolerance=DEFAULT_TOL) -> dict:
    """Mid-interval threshold per star edge in the instance's own context."""
    out = {}
    for tid in star.edges:
        e = instance.task(tid)
        probe = BoundaryProbe(oracle, instance, tid, star.root, tolerance)
        out[tid] = probe.mid(e.value_on(e.other(star.root)))
    return out


def is_box(oracle, instance: Instance, star: Star, delta,
           tolerance=DEFAULT_TOL, thresholds=None) -> BoxReport:
    """Single-corner box test: shift every root value to psi - delta.

    The star's root values must currently be 0.  `thresholds` may carry
    precomputed psi mids (they only depend on the instance, not the star),
    which large sweeps use to share bisections across stars.
    """
    delta = rational(delta)
    for tid in star.edges:
        if instance.task(tid).value_on(star.root) != 0:
            raise PreconditionViolated(f"task {tid}: root value must be 0 before the shift")
    psi = thresholds or star_thresholds(oracle, instance, star, tolerance)
    psi = {t: psi[t] for t in star.edges}
    if delta >= min(psi.values()):
        raise DeltaTooLarge(f"delta {delta} reaches a threshold {min(psi.values())}")
    member = _RegionMembership(oracle, instance, star)
    point = {t: psi[t] - delta for t in star.edges}
    alloc = member.allocation(point)
    verdict = all(alloc.assignment[t] == star.root for t in star.edges)
    return BoxReport(
        star=star,
        delta=delta,
        thresholds=psi,
        probe_point=point,
        is_box=verdict,
        allocation={t: alloc.assignment[t] for t in star.edges},
    )


def is_nice_star(oracle, instance: Instance, star: Star, eps, z,
                 tolerance=DEFAULT_TOL, thresholds=None) -> dict:
    """Check sum of thresholds >= (1 - 3 eps)(n - 1) z, with probe slack."""
    eps, z = rational(eps), rational(z)
    if eps <= 0 or z <= 0:
        raise PreconditionViolated("need eps > 0 and z > 0")
    for tid in star.edges:
        e = instance.task(tid)
        if e.value_on(star.root) != 0:
            raise PreconditionViolated(f"task {tid}: root value must be 0")
        s = e.value_on(e.other(star.root))
        if not (z < s < (1 + eps) * z):
            raise PreconditionViolated(
                f"task {tid}: leaf value {s} outside (z, (1+eps)z)"
            )
    psi = thresholds or star_thresholds(oracle, instance, star, tolerance)
    total = sum(psi[t] for t in star.edges)
    k = len(star.edges)
    threshold = (1 - 3 * eps) * (instance.n - 1) * z - k * rational(tolerance)
    return {
        "sum_psi": total,
        "threshold": threshold,
        "passed": total >= threshold,
        "thresholds": {t: psi[t] for t in star.edges},
    }


def shift_to_corner(oracle, instance: Instance, star: Star, nu,
                    tolerance=DEFAULT_TOL) -> Instance:
    """New instance with star root values set to psi - 4^k nu."""
    nu = rational(nu)
    k = len(star.edges)
    delta = 4**k * nu
    psi = star_thresholds(oracle, instance, star, tolerance)
    out = instance.clone()
    for tid in star.edges:
        value = psi[tid] - delta
        if value < 0:
            raise NegativeValue(
                f"task {tid}: shift {delta} overshoots threshold {psi[tid]}"
            )
        out.set_value(tid, star.root, value)
    return out


def is_chopped_off_box(oracle, instance: Instance, star: Star, nu,
                       tolerance=DEFAULT_TOL, budget: int = 512) -> dict:
    """All (k-1)-subsets are boxes, also along the last leaf's value grid.

    The grid walks q = 1..4n/nu while the last edge's leaf value stays
    positive; GridTooFine when that walk exceeds the probe budget.
    """
    nu = rational(nu)
    k = len(star.edges)
    if k < 3:
        raise PreconditionViolated("chopped-off test needs a star of at least 3 edges")
    delta = 4 ** (k - 1) * nu
    checks = []
    for drop in star.edges:
        sub = Star(star.root, [t for t in star.edges if t != drop])
        rep = is_box(oracle, instance, sub, delta, tolerance)
        checks.append({"without": drop, "is_box": rep.is_box})
        if not rep.is_box:
            return {"verdict": False, "checks": checks}
    last = star.edges[-1]
    sub = Star(star.root, star.edges[:-1])
    e = instance.task(last)
    leaf = e.other(star.root)
    s_bar = e.value_on(leaf)
    grid_max = int(4 * instance.n / nu)
    if grid_max > budget:
        raise GridTooFine(f"grid of {grid_max} steps exceeds budget {budget}")
    for q in range(1, grid_max + 1):
        step = q * nu / (4 * instance.n)
        if s_bar <= step:
            break
        work = instance.clone()
        work.set_value(last, leaf, s_bar - step)
        rep = is_box(oracle, work, sub, delta, tolerance)
        checks.append({"without": last, "q": q, "is_box": rep.is_box})
        if not rep.is_box:
            return {"verdict": False, "checks": checks}
    return {"verdict": True, "checks": checks}


def find_c4(adjacency) -> tuple | None:
    """First 4-cycle in a bipartite adjacency (list of row bitsets / bool lists).

    Returns (row1, row2, col1, col2) or None.  Exact pairwise column-set
    intersection over row bitmasks.
    """
    masks = []
    for row in adjacency:
        if isinstance(row, int):
            masks.append(row)
        else:
            m = 0
            for j, bit in enumerate(row):
                if bit:
                    m |= 1 << j
            masks.append(m)
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            common = masks[i] & masks[j]
            if common.bit_count() >= 2:
                c1 = (common & -common).bit_length() - 1
                rest = common & (common - 1)
                c2 = (rest & -rest).bit_length() - 1
                return (i, j, c1, c2)
    return None


def base_case_check(oracle, instance: Instance, root: int, leaf_tasks: dict,
                    nu, tolerance=DEFAULT_TOL) -> dict:
    """Two leaves, two tasks each: box-test all four spanning stars.

    `leaf_tasks` maps each of the two leaves to its two task ids.  Boxes
    are tested at delta = 32 nu; for every non-box star the report records
    the bundling cut depth measured by classify_pair, which must be at
    least 32 nu when present.
    """
    nu = rational(nu)
    leaves = sorted(leaf_tasks)
    if len(leaves) != 2 or any(len(leaf_tasks[l]) != 2 for l in leaves):
        raise PreconditionViolated("need exactly 2 leaves with 2 tasks each")
    delta = 32 * nu
    thresholds = {}
    for tid in [t for l in leaves for t in leaf_tasks[l]]:
        e = instance.task(tid)
        probe = BoundaryProbe(oracle, instance, tid, root, tolerance)
        thresholds[tid] = probe.mid(e.value_on(e.other(root)))
    box_stars = []
    depths = {}
    for ta in leaf_tasks[leaves[0]]:
        for tb in leaf_tasks[leaves[1]]:
            star = Star(root, [ta, tb])
            rep = is_box(oracle, instance, star, delta, tolerance, thresholds=thresholds)
            if rep.is_box:
                box_stars.append((ta, tb))
            else:
                shape = classify_pair(oracle, instance, (ta, tb),
                                      resolution=min(nu / 4, Fraction(1, 2**8)))
                if "cut_depth" in shape:
                    depths[(ta, tb)] = shape["cut_depth"]
    return {"box_stars": box_stars, "bundle_depths": depths, "delta": delta}
