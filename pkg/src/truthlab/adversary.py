"""Adversarial witness pipeline and closed-form bound evaluators.

The pipeline samples a random multi-clique whose optimal makespan is 0,
quantizes every edge's threshold tables, groups parallel edges into
full-range dipoles, picks a root and a grid value z whose threshold sum
clears the nice-star bar, assembles a nice multi-star, searches it for a
spanning box star, and emits a self-verified witness instance whose
mechanism-vs-optimal ratio certifies a lower bound for the plugged-in
oracle.  Existence theorems become bounded searches with certificates
and explicit failure diagnostics.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .boundary import BoundaryProbe, quantize
from .core import (
    Allocation,
    Edge,
    Instance,
    MultiStar,
    Star,
    instance_to_doc,
    makespan,
    opt_makespan,
)
from .errors import (
    BoxNotFound,
    CertificateMismatch,
    ConfigError,
    InsufficientMultiplicity,
    NoNiceStar,
    PreconditionViolated,
    Unbounded,
    WitnessAssertionError,
)
from .geometry import is_box, is_nice_star, star_thresholds
from .parallel import parallel_map
from .values import (
    DEFAULT_TOL,
    format_rational,
    rational,
    sqrt_lower_bound,
    stream,
)


@dataclass
class AdversaryConfig:
    n: int = 3
    eps: Fraction = Fraction(1, 20)
    xi: Fraction = Fraction(1, 4)
    nu: Fraction = Fraction(1, 2**12)
    ell: int = 32
    q: int = 2
    seed: int = 0
    tolerance: Fraction = DEFAULT_TOL
    swap_budget: int = 64
    jobs: int = 1

    def __post_init__(self):
        self.eps = rational(self.eps)
        self.xi = rational(self.xi)
        self.nu = rational(self.nu)
        self.tolerance = rational(self.tolerance)

    @property
    def nu_prime(self) -> Fraction:
        return self.nu / 4

    def validate(self):
        """Raise ConfigError on hard violations; return soft warnings.

        The bound nu < xi / (n^2 4^n) matters for the probability bounds,
        not for running the pipeline against one oracle, so breaking it is
        reported, not fatal.
        """
        if self.n < 2:
            raise ConfigError("need at least 2 machines")
        if self.eps <= 0 or (1 / self.eps).denominator != 1:
            raise ConfigError("1/eps must be a positive integer")
        if not (0 < self.xi < 1):
            raise ConfigError("xi must lie in (0, 1)")
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        if self.ell < 1 or self.q < 1:
            raise ConfigError("ell and q must be >= 1")
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        warnings = []
        proof_cap = self.xi / (self.n**2 * 4**self.n)
        if self.nu >= proof_cap:
            warnings.append(
                f"nu = {format_rational(self.nu)} is outside the probability-bound "
                f"range (0, {format_rational(proof_cap)}); witness certificates "
                "remain valid per run"
            )
        return warnings

    def to_doc(self):
        return {
            "n": self.n,
            "eps": format_rational(self.eps),
            "xi": format_rational(self.xi),
            "nu": format_rational(self.nu),
            "ell": self.ell,
            "q": self.q,
            "seed": self.seed,
            "tolerance": format_rational(self.tolerance),
            "swap_budget": self.swap_budget,
        }


def grid_values(eps: Fraction):
    """D_eps = {eps, 2 eps, ..., 1}."""
    count = int(1 / eps)
    return [k * eps for k in range(1, count + 1)]


def floor_to_grid(x: Fraction, eps: Fraction) -> Fraction:
    return eps * (x // eps)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_multi_clique(config: AdversaryConfig) -> Instance:
    """Random multi-clique: ell edges per machine pair plus a 0-loop per node.

    Every edge gets one endpoint 0 and the other a value drawn by first
    picking z uniformly from the eps-grid and then placing the value
    uniformly (31 random bits) inside the open interval (z, (1+eps)z), so
    its grid floor is exactly z and the optimal makespan is 0.
    """
    config.validate()
    n, ell, eps = config.n, config.ell, config.eps
    grid_len = int(1 / eps)
    edges = []
    next_id = 0
    for i, j in itertools.combinations(range(n), 2):
        for r in range(ell):
            rng = stream(config.seed, "edge", i, j, r)
            zero_on_low = rng.getrandbits(1) == 0
            z = rng.randint(1, grid_len) * eps
            u = z + z * eps * Fraction(rng.randrange(1, 2**31), 2**31)
            va, vb = (Fraction(0), u) if zero_on_low else (u, Fraction(0))
            edges.append(Edge(next_id, i, j, va, vb))
            next_id += 1
    for i in range(n):
        edges.append(Edge(next_id, i, i, Fraction(0), Fraction(0)))
        next_id += 1
    return Instance(n, edges)


MAX_CONTINUITY_RETRIES = 8


def ensure_continuity(oracle, clique: Instance, config: AdversaryConfig) -> tuple:
    """Detect threshold jumps at sampled edge values and resample them.

    For each edge, the zero side's threshold is probed just below and just
    above the nonzero value; a spread beyond the jump heuristic marks a
    suspected discontinuity and the value is redrawn inside its interval
    (deterministically from the edge's stream).  Persistent jumps after 8
    retries are a pathological oracle worth surfacing as a hard error.
    """
    eps = config.eps
    out = clique.clone()
    resampled = []
    for e in sorted(out.edges, key=lambda e: e.id):
        if e.a == e.b:
            continue
        zero_side = e.a if e.va == 0 else e.b
        value_side = e.other(zero_side)
        z = floor_to_grid(e.value_on(value_side), eps)
        pair = (min(e.a, e.b), max(e.a, e.b))
        for attempt in range(MAX_CONTINUITY_RETRIES + 1):
            probe = BoundaryProbe(oracle, out, e.id, zero_side, config.tolerance)
            try:
                suspected = probe.suspected_discontinuity(e.value_on(value_side))
            except Unbounded:
                break  # flat-infinity threshold: no jump; tables flag it later
            if not suspected:
                break
            if attempt == MAX_CONTINUITY_RETRIES:
                raise CertificateMismatch(
                    f"task {e.id}: threshold jump persists after "
                    f"{MAX_CONTINUITY_RETRIES} resamples"
                )
            rng = stream(config.seed, "edge", pair[0], pair[1], e.id, "retry", attempt)
            u = z + z * eps * Fraction(rng.randrange(1, 2**31), 2**31)
            out.set_value(e.id, value_side, u)
            if e.id not in resampled:
                resampled.append(e.id)
    return out, resampled


def loop_ids(instance: Instance) -> dict:
    return {e.a: e.id for e in instance.edges if e.a == e.b}


def pair_edge_ids(instance: Instance) -> dict:
    out = {}
    for e in instance.edges:
        if e.a != e.b:
            out.setdefault((e.a, e.b), []).append(e.id)
    return out


# ---------------------------------------------------------------------------
# closed-form bound evaluators
# ---------------------------------------------------------------------------

def dipole_clique_bound(q: int, n: int, eps) -> dict:
    """Exact K = (n/eps)^(4/eps), p = (2/eps)! (eps/2)^(2/eps), q' = 6 K q/(p eps)."""
    eps = rational(eps)
    inv = 1 / eps
    if inv.denominator != 1 or inv <= 0:
        raise PreconditionViolated("1/eps must be a positive integer")
    inv = int(inv)
    K = Fraction(n * inv) ** (4 * inv)
    p = Fraction(math.factorial(2 * inv)) * Fraction(1, 2 * inv) ** (2 * inv)
    q_prime = 6 * K * q / (p * eps)
    return {"K": K, "p": p, "q_prime": q_prime}


def recurrence_bound(n: int, nu, xi, ell: int, k: int = 2) -> dict:
    """Closed-form non-box probability bounds and the final multiplicity bar.

    b2 = 2/sqrt(ell); for k >= 2 the bound (5n/nu)^(k-2) * 2n^3/(xi sqrt(ell));
    min_multiplicity = (5n/nu)^(2n).  sqrt(ell) uses an exact value for
    perfect squares, otherwise a rational lower bound so the probability
    bounds stay valid upper bounds.
    """
    nu, xi = rational(nu), rational(xi)
    if k < 2:
        raise PreconditionViolated("bounds start at k = 2")
    if nu <= 0 or xi <= 0 or ell < 1:
        raise PreconditionViolated("need nu > 0, xi > 0, ell >= 1")
    root = sqrt_lower_bound(ell)
    b2 = Fraction(2) / root
    base = 2 * Fraction(n**3) / (xi * root)
    bk = (5 * n / nu) ** (k - 2) * base
    return {
        "b2": b2,
        "bk": bk,
        "k": k,
        "min_multiplicity": (5 * n / nu) ** (2 * n),
    }


# ---------------------------------------------------------------------------
# dipoles
# ---------------------------------------------------------------------------

@dataclass
class DipoleSet:
    pair: tuple  # (i, j) with i < j
    edge_ids: list  # 2/eps edges covering every grid slot on both sides
    table_low: tuple  # quantized table of side i, as a grouping key
    table_high: tuple  # quantized table of side j


def edge_tables(oracle, clique: Instance, eps, tolerance=DEFAULT_TOL, jobs: int = 1):
    """Quantized threshold tables (both directions) for every non-loop edge."""
    ids = [e.id for e in clique.edges if e.a != e.b]

    def build(tid):
        e = clique.task(tid)
        t_low = quantize(BoundaryProbe(oracle, clique, tid, e.a, tolerance), eps)
        t_high = quantize(BoundaryProbe(oracle, clique, tid, e.b, tolerance), eps)
        return tid, (t_low, t_high)

    return dict(parallel_map(build, ids, jobs))


def find_dipoles(oracle, clique: Instance, eps, tolerance=DEFAULT_TOL,
                 jobs: int = 1, tables=None) -> dict:
    """Group edges by exact table pair and extract disjoint full-range covers.

    A dipole between i and j is 2/eps edges sharing both quantized tables
    with, for every grid value z, one edge whose i-side floors to z (j side
    0) and one whose j-side floors to z (i side 0).
    """
    eps = rational(eps)
    tables = tables if tables is not None else edge_tables(oracle, clique, eps, tolerance, jobs)
    zs = grid_values(eps)
    result = {}
    for pair, ids in sorted(pair_edge_ids(clique).items()):
        groups = {}
        for tid in sorted(ids):
            t_low, t_high = tables[tid]
            groups.setdefault((t_low.key(), t_high.key()), []).append(tid)
        dipoles = []
        for key, members in sorted(groups.items()):
            slots = {}
            for tid in members:
                e = clique.task(tid)
                if e.vb == 0:
                    slots.setdefault(("low", floor_to_grid(e.va, eps)), []).append(tid)
                else:
                    slots.setdefault(("high", floor_to_grid(e.vb, eps)), []).append(tid)
            wanted = [(side, z) for side in ("low", "high") for z in zs]
            if any(slot not in slots for slot in wanted):
                continue
            covers = min(len(slots[slot]) for slot in wanted)
            for c in range(covers):
                dipoles.append(
                    DipoleSet(
                        pair=pair,
                        edge_ids=sorted(slots[slot][c] for slot in wanted),
                        table_low=key[0],
                        table_high=key[1],
                    )
                )
        result[pair] = dipoles
    return result


def _dominant_tables(clique, tables, pair, ids):
    """Fallback pair tables: the largest identical-table group of edges."""
    groups = {}
    for tid in sorted(ids):
        t_low, t_high = tables[tid]
        groups.setdefault((t_low.key(), t_high.key()), []).append(tid)
    key, members = max(groups.items(), key=lambda kv: (len(kv[1]), kv[0]))
    return key, members


@dataclass
class PairTables:
    """Per-pair quantized tables plus the edges they were read from."""

    pair: tuple
    low: dict  # z -> psi for the low machine of the pair
    high: dict
    low_flags: frozenset  # z values where the low-side threshold breaches n*z
    high_flags: frozenset
    edge_ids: list
    via_dipole: bool


def assemble_pair_tables(clique: Instance, tables: dict, dipoles: dict) -> dict:
    """One PairTables per machine pair: dipole tables when a dipole exists,
    else the dominant table group (recorded as the desk-scale fallback)."""
    out = {}
    for pair, ids in sorted(pair_edge_ids(clique).items()):
        pair_dipoles = dipoles.get(pair, [])
        if pair_dipoles:
            edge_pool = sorted({tid for d in pair_dipoles for tid in d.edge_ids})
            via = True
        else:
            _, members = _dominant_tables(clique, tables, pair, ids)
            edge_pool = members
            via = False
        t_low, t_high = tables[edge_pool[0]]
        out[pair] = PairTables(
            pair,
            dict(t_low.values),
            dict(t_high.values),
            frozenset(t_low.slope_flags),
            frozenset(t_high.slope_flags),
            edge_pool,
            via,
        )
    return out


def _root_table(pair_tables: dict, root: int, leaf: int):
    """(table, flags) for the root side of the (root, leaf) pair."""
    pair = (min(root, leaf), max(root, leaf))
    pt = pair_tables[pair]
    if root == pair[0]:
        return pt.low, pt.low_flags
    return pt.high, pt.high_flags


# ---------------------------------------------------------------------------
# root / z selection and nice multi-star assembly
# ---------------------------------------------------------------------------

def _candidate_multiplicity(clique, pair_tables, root, leaf, z, eps):
    pt = pair_tables[(min(root, leaf), max(root, leaf))]
    count = 0
    for tid in pt.edge_ids:
        e = clique.task(tid)
        if e.value_on(root) == 0 and floor_to_grid(e.value_on(leaf), eps) == z:
            count += 1
    return count


def select_root_and_z(clique: Instance, pair_tables: dict, eps, n: int,
                      min_multiplicity: int = 0) -> dict:
    """Scan (root, z): threshold sums vs the (1 - 3 eps)(n - 1) z bar.

    Returns the best candidate (normalized score; ties prefer candidates
    with enough parallel edges, then larger z, then smaller root) plus the
    global counting total over all roots and grid values.  NoNiceStar when
    no candidate clears the bar.
    """
    eps = rational(eps)
    zs = grid_values(eps)
    counting_total = Fraction(0)
    candidates = []
    for root in range(n):
        for z in zs:
            per_leaf = {}
            breached = False
            for leaf in range(n):
                if leaf == root:
                    continue
                table, flags = _root_table(pair_tables, root, leaf)
                per_leaf[leaf] = table[z]
                breached = breached or z in flags
            total = sum(per_leaf.values(), Fraction(0))
            counting_total += total
            bar = (1 - 3 * eps) * (n - 1) * z
            mult = min(
                _candidate_multiplicity(clique, pair_tables, root, leaf, z, eps)
                for leaf in per_leaf
            )
            candidates.append(
                {
                    "root": root,
                    "z": z,
                    "per_leaf": per_leaf,
                    "sum": total,
                    "bar": bar,
                    # a slope breach certifies a premise violation; such
                    # candidates cannot anchor a finite-corner witness
                    "meets_bar": total >= bar and not breached,
                    "score": total / z,
                    "multiplicity": mult,
                }
            )
    passing = [c for c in candidates if c["meets_bar"]]
    if not passing:
        raise NoNiceStar(
            "no (root, z) met the nice-star bar; the oracle violates a premise "
            "or already certifies a high ratio"
        )
    passing.sort(
        key=lambda c: (
            -c["score"],
            c["multiplicity"] < min_multiplicity,
            -c["z"],
            c["root"],
        )
    )
    best = passing[0]
    return {
        "root": best["root"],
        "z": best["z"],
        "per_leaf": best["per_leaf"],
        "sum": best["sum"],
        "counting_total": counting_total,
        "multiplicity": best["multiplicity"],
        "candidates": passing,
    }


def find_nice_multi_star(oracle, clique: Instance, config: AdversaryConfig,
                         selection: dict, pair_tables: dict) -> dict:
    """Assemble the multi-star at the selected (root, z) and certify it.

    Tries the ranked candidates in order until one offers q edges per
    leaf; certifies q sampled spanning stars with the nice-star check and
    hard-errors on any mismatch.
    """
    eps = rational(config.eps)
    for candidate in selection["candidates"]:
        root, z = candidate["root"], candidate["z"]
        edges_by_leaf = {}
        for leaf in range(config.n):
            if leaf == root:
                continue
            pt = pair_tables[(min(root, leaf), max(root, leaf))]
            chosen = [
                tid
                for tid in pt.edge_ids
                if clique.task(tid).value_on(root) == 0
                and floor_to_grid(clique.task(tid).value_on(leaf), eps) == z
            ]
            edges_by_leaf[leaf] = sorted(chosen)
        multi = MultiStar(root=root, edges_by_leaf=edges_by_leaf)
        if multi.multiplicity() < config.q:
            continue
        rng = stream(config.seed, "nice-check", root, int(z / eps))
        leaves = sorted(edges_by_leaf)
        checks = []
        for _ in range(config.q):
            choice = {leaf: rng.choice(edges_by_leaf[leaf]) for leaf in leaves}
            star = multi.spanning_star(choice)
            res = is_nice_star(oracle, clique, star, eps, z, config.tolerance)
            checks.append({"edges": star.edges, "sum_psi": res["sum_psi"],
                           "passed": res["passed"]})
            if not res["passed"]:
                raise CertificateMismatch(
                    f"selected star {star.edges} failed the nice-star check: "
                    f"sum {res['sum_psi']} < {res['threshold']}"
                )
        return {"multi_star": multi, "root": root, "z": z, "checks": checks}
    raise InsufficientMultiplicity(
        f"no candidate (root, z) offers {config.q} qualifying edges per leaf; "
        "raise ell or lower q"
    )


def find_box_star(oracle, clique: Instance, multi_star: MultiStar, delta,
                  budget: int, tolerance=DEFAULT_TOL) -> tuple:
    """Deterministic box search over spanning stars with sibling swaps.

    Starts from the lowest-id star and, on failure, swaps one leaf's edge
    at a time (breadth-first over single swaps); the budget counts box
    tests.  Thresholds are probed once per edge and shared.
    """
    if multi_star.multiplicity() < 2:
        raise PreconditionViolated("box search needs multiplicity >= 2 for swaps")
    delta = rational(delta)
    leaves = sorted(multi_star.edges_by_leaf)
    psi_cache = {}

    def thresholds_for(star: Star):
        missing = [t for t in star.edges if t not in psi_cache]
        if missing:
            psi_cache.update(
                star_thresholds(oracle, clique, Star(star.root, missing), tolerance)
            )
        return {t: psi_cache[t] for t in star.edges}

    first = {leaf: multi_star.edges_by_leaf[leaf][0] for leaf in leaves}
    queue = [first]
    seen = {tuple(sorted(first.items()))}
    tested = 0
    reports = []
    while queue and tested < budget:
        choice = queue.pop(0)
        star = multi_star.spanning_star(choice)
        report = is_box(oracle, clique, star, delta, tolerance,
                        thresholds=thresholds_for(star))
        tested += 1
        reports.append({"edges": star.edges, "is_box": report.is_box})
        if report.is_box:
            return star, report, reports
        for leaf in leaves:
            for sibling in multi_star.edges_by_leaf[leaf]:
                if sibling == choice[leaf]:
                    continue
                swapped = dict(choice)
                swapped[leaf] = sibling
                key = tuple(sorted(swapped.items()))
                if key not in seen:
                    seen.add(key)
                    queue.append(swapped)
    raise BoxNotFound(
        f"no box star within {tested} tests; multiplicity too low for this "
        "oracle or a premise does not hold"
    )


# ---------------------------------------------------------------------------
# witness construction
# ---------------------------------------------------------------------------

@dataclass
class WitnessReport:
    instance: Instance
    allocation: Allocation
    mech_makespan: Fraction
    opt_makespan: Fraction
    opt_allocation: Allocation
    ratio: Fraction
    root: int
    z: Fraction
    eps: Fraction
    delta: Fraction
    star_edges: list
    makespan_floor: Fraction

    def to_doc(self):
        return {
            "instance": instance_to_doc(self.instance),
            "allocation": {str(t): m for t, m in sorted(self.allocation.assignment.items())},
            "mech_makespan": format_rational(self.mech_makespan),
            "opt_makespan": format_rational(self.opt_makespan),
            "opt_allocation": {
                str(t): m for t, m in sorted(self.opt_allocation.assignment.items())
            },
            "ratio": format_rational(self.ratio),
            "ratio_float": float(self.ratio),
            "parameters": {
                "root": self.root,
                "z": format_rational(self.z),
                "eps": format_rational(self.eps),
                "delta": format_rational(self.delta),
                "star_edges": list(self.star_edges),
            },
            "makespan_floor": format_rational(self.makespan_floor),
        }


def build_witness(oracle, clique: Instance, box_report, root_loop: int, z, eps,
                  delta, tolerance=DEFAULT_TOL) -> WitnessReport:
    """Final instance: star root values psi - 2 delta, root loop raised to z.

    Queries the oracle once, computes the exact optimum, and asserts the
    makespan floor z + (1-3 eps)(n-1) z - 2(n-1) delta (minus probe slack)
    and OPT <= (1+eps) z.  A failed assertion dumps the instance: it is a
    genuine counterexample to the pipeline's premises.
    """
    z, eps, delta = rational(z), rational(eps), rational(delta)
    star = box_report.star
    final = clique.clone()
    for tid in star.edges:
        final.set_value(tid, star.root, box_report.thresholds[tid] - 2 * delta)
    final.set_value(root_loop, star.root, z)

    alloc = oracle(final)
    mech = makespan(final, alloc)
    opt_value, opt_alloc = opt_makespan(final)
    n = clique.n
    floor = z + (1 - 3 * eps) * (n - 1) * z - 2 * (n - 1) * delta
    if opt_value <= 0:
        raise WitnessAssertionError(
            "optimal makespan is not positive", instance_to_doc(final)
        )
    if mech < floor - n * rational(tolerance):
        raise WitnessAssertionError(
            f"mechanism makespan {mech} under the floor {floor}",
            instance_to_doc(final),
        )
    if opt_value > (1 + eps) * z:
        raise WitnessAssertionError(
            f"optimal makespan {opt_value} above (1+eps) z", instance_to_doc(final)
        )
    return WitnessReport(
        instance=final,
        allocation=alloc,
        mech_makespan=mech,
        opt_makespan=opt_value,
        opt_allocation=opt_alloc,
        ratio=mech / opt_value,
        root=star.root,
        z=z,
        eps=eps,
        delta=delta,
        star_edges=list(star.edges),
        makespan_floor=floor,
    )


# ---------------------------------------------------------------------------
# empirical non-box frequency
# ---------------------------------------------------------------------------

def estimate_bk(oracle, instance: Instance, root: int, leaf_tasks: dict,
                sample_count: int, nu, seed: int = 0,
                tolerance=DEFAULT_TOL) -> dict:
    """Frequency of non-box stars among sampled k-leaf stars at delta = 4^k nu."""
    if sample_count < 1:
        raise PreconditionViolated("sample_count must be >= 1")
    nu = rational(nu)
    leaves = sorted(leaf_tasks)
    k = len(leaves)
    if not 1 <= k <= instance.n - 1:
        raise PreconditionViolated("need 1 <= k <= n - 1 leaves")
    delta = 4**k * nu
    counts = [len(leaf_tasks[l]) for l in leaves]
    total = 1
    for c in counts:
        total *= c
    rng = stream(seed, "bk", k)
    if sample_count <= total:
        indices = rng.sample(range(total), sample_count)
    else:
        indices = [rng.randrange(total) for _ in range(sample_count)]

    psi_cache = {}

    def decode(index):
        choice = {}
        for leaf, c in zip(leaves, counts):
            index, pos = divmod(index, c)
            choice[leaf] = leaf_tasks[leaf][pos]
        return choice

    non_box = 0
    for index in indices:
        star = Star(root, [decode(index)[leaf] for leaf in leaves])
        missing = [t for t in star.edges if t not in psi_cache]
        if missing:
            psi_cache.update(
                star_thresholds(oracle, instance, Star(root, missing), tolerance)
            )
        rep = is_box(oracle, instance, star, delta, tolerance,
                     thresholds={t: psi_cache[t] for t in star.edges})
        if not rep.is_box:
            non_box += 1
    return {
        "samples": len(indices),
        "non_box": non_box,
        "frequency": Fraction(non_box, len(indices)),
        "delta": delta,
    }


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    ok: bool
    report: WitnessReport = None
    failure: str = None
    failure_stage: str = None
    stages: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def run_pipeline(oracle, config: AdversaryConfig) -> PipelineResult:
    """Full adversary run; substantive failures become a diagnostic result."""
    warnings = config.validate()
    stages = []
    clique = sample_multi_clique(config)
    stages.append({"stage": "sample", "tasks": len(clique.edges)})

    clique, resampled = ensure_continuity(oracle, clique, config)
    stages.append({"stage": "continuity", "resampled_edges": resampled})

    tables = edge_tables(oracle, clique, config.eps, config.tolerance, config.jobs)
    stages.append({"stage": "tables", "edges": len(tables)})

    dipoles = find_dipoles(oracle, clique, config.eps, config.tolerance,
                           config.jobs, tables=tables)
    pair_tables = assemble_pair_tables(clique, tables, dipoles)
    stages.append(
        {
            "stage": "dipoles",
            "per_pair": {f"{i}-{j}": len(ds) for (i, j), ds in sorted(dipoles.items())},
            "fallback_pairs": [
                f"{i}-{j}" for (i, j), pt in sorted(pair_tables.items())
                if not pt.via_dipole
            ],
        }
    )

    try:
        selection = select_root_and_z(
            clique, pair_tables, config.eps, config.n, min_multiplicity=config.q
        )
    except NoNiceStar as exc:
        stages.append({"stage": "select", "error": str(exc)})
        return PipelineResult(False, failure=str(exc), failure_stage="select",
                              stages=stages, warnings=warnings)
    stages.append(
        {
            "stage": "select",
            "root": selection["root"],
            "z": format_rational(selection["z"]),
            "counting_total": format_rational(selection["counting_total"]),
            "multiplicity": selection["multiplicity"],
        }
    )

    try:
        nice = find_nice_multi_star(oracle, clique, config, selection, pair_tables)
    except InsufficientMultiplicity as exc:
        stages.append({"stage": "nice-multi-star", "error": str(exc)})
        return PipelineResult(False, failure=str(exc), failure_stage="nice-multi-star",
                              stages=stages, warnings=warnings)
    multi = nice["multi_star"]
    stages.append(
        {
            "stage": "nice-multi-star",
            "root": nice["root"],
            "z": format_rational(nice["z"]),
            "multiplicity": multi.multiplicity(),
        }
    )

    delta = 4 ** (config.n - 1) * config.nu
    try:
        star, box_rep, attempts = find_box_star(
            oracle, clique, multi, delta, config.swap_budget, config.tolerance
        )
    except BoxNotFound as exc:
        stages.append({"stage": "box", "error": str(exc)})
        return PipelineResult(False, failure=str(exc), failure_stage="box",
                              stages=stages, warnings=warnings)
    stages.append({"stage": "box", "edges": star.edges, "tests": len(attempts)})

    root_loop = loop_ids(clique)[nice["root"]]
    report = build_witness(
        oracle, clique, box_rep, root_loop, nice["z"], config.eps, delta,
        config.tolerance,
    )
    stages.append(
        {
            "stage": "witness",
            "ratio": format_rational(report.ratio),
            "ratio_float": float(report.ratio),
        }
    )
    return PipelineResult(True, report=report, stages=stages, warnings=warnings)
