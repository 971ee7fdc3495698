from fractions import Fraction as F

import pytest

from truthlab.adversary import (
    AdversaryConfig,
    assemble_pair_tables,
    build_witness,
    dipole_clique_bound,
    edge_tables,
    ensure_continuity,
    estimate_bk,
    find_box_star,
    find_dipoles,
    find_nice_multi_star,
    floor_to_grid,
    grid_values,
    loop_ids,
    pair_edge_ids,
    recurrence_bound,
    run_pipeline,
    sample_multi_clique,
    select_root_and_z,
)
from truthlab.core import (
    Edge,
    Instance,
    MultiStar,
    Star,
    makespan,
    opt_makespan,
    parse_instance,
    serialize_instance,
)
from truthlab.errors import (
    BoxNotFound,
    ConfigError,
    NoNiceStar,
    PreconditionViolated,
)
from truthlab.geometry import is_box
from truthlab.mechanisms import (
    PiecewiseLinear,
    affine_minimizer,
    constant,
    oracle,
    task_independent,
    vcg,
)

VCG = oracle(vcg())


def small_config(**kw):
    defaults = dict(n=3, eps=F(1, 4), xi=F(1, 4), nu=F(1, 4096), ell=16, q=2, seed=0)
    defaults.update(kw)
    return AdversaryConfig(**defaults)


def test_config_validation():
    with pytest.raises(ConfigError):
        AdversaryConfig(n=1).validate()
    with pytest.raises(ConfigError):
        AdversaryConfig(eps=F(2, 5)).validate()
    with pytest.raises(ConfigError):
        AdversaryConfig(xi=F(2)).validate()
    assert AdversaryConfig(n=3, nu=F(1, 2**20)).validate() == []
    # out-of-range nu is a warning, not an error
    warnings = AdversaryConfig(n=4, nu=F(1, 4096)).validate()
    assert len(warnings) == 1


def test_sample_structure_and_values():
    config = small_config(n=2, ell=1, eps=F(1, 2))
    inst = sample_multi_clique(config)
    pairs = pair_edge_ids(inst)
    assert set(pairs) == {(0, 1)} and len(pairs[(0, 1)]) == 1
    assert sorted(loop_ids(inst)) == [0, 1]
    e = inst.task(pairs[(0, 1)][0])
    zero, value = (e.va, e.vb) if e.va == 0 else (e.vb, e.va)
    assert zero == 0
    z = floor_to_grid(value, F(1, 2))
    assert z in grid_values(F(1, 2))
    assert z < value < (1 + F(1, 2)) * z


def test_sample_optimum_is_zero():
    for seed in range(5):
        inst = sample_multi_clique(small_config(seed=seed, ell=4))
        assert opt_makespan(inst)[0] == 0


def test_sample_determinism():
    a = serialize_instance(sample_multi_clique(small_config(seed=9)))
    b = serialize_instance(sample_multi_clique(small_config(seed=9)))
    assert a == b
    c = serialize_instance(sample_multi_clique(small_config(seed=10)))
    assert a != c


def test_dipole_clique_bound_exact_values():
    res = dipole_clique_bound(1, 2, F(1, 2))
    assert res["K"] == 65536
    assert res["p"] == F(3, 32)
    assert res["q_prime"] == 8388608


def test_recurrence_bound_values():
    res = recurrence_bound(3, F(1, 100), F(1, 4), 10000, k=2)
    assert res["b2"] == F(1, 50)
    assert res["min_multiplicity"] == F(1500) ** 6
    # at k = 2 the closed form reads (5n/nu)^0 * 2 n^3 / (xi sqrt(ell))
    assert res["bk"] == 2 * 27 / (F(1, 4) * 100)


def test_recurrence_bound_monotonicity():
    b3 = recurrence_bound(3, F(1, 100), F(1, 4), 10000, k=3)["bk"]
    b4 = recurrence_bound(3, F(1, 100), F(1, 4), 10000, k=4)["bk"]
    assert b3 <= b4
    large = recurrence_bound(3, F(1, 100), F(1, 4), 40000, k=3)["bk"]
    assert large < b3


def test_recurrence_bound_irrational_sqrt_stays_upper_bound():
    res = recurrence_bound(3, F(1, 100), F(1, 4), 10, k=2)
    assert res["b2"] ** 2 >= F(4, 10)  # 2/sqrt(10) rounded outward


def test_pigeonhole_no_dipoles_when_ell_small():
    config = small_config(n=2, ell=4, eps=F(1, 4))  # needs 2/eps = 8 edges
    clique = sample_multi_clique(config)
    dipoles = find_dipoles(VCG, clique, F(1, 4))
    assert dipoles[(0, 1)] == []


def test_vcg_dipoles_found_at_high_multiplicity():
    config = small_config(n=2, ell=64, eps=F(1, 4), seed=3)
    clique = sample_multi_clique(config)
    dipoles = find_dipoles(VCG, clique, F(1, 4))
    assert len(dipoles[(0, 1)]) >= 1
    d = dipoles[(0, 1)][0]
    assert len(d.edge_ids) == 8  # 2/eps slots
    # full range: every grid value present on each side
    zs = set()
    for tid in d.edge_ids:
        e = clique.task(tid)
        side = "low" if e.vb == 0 else "high"
        zs.add((side, floor_to_grid(max(e.va, e.vb), F(1, 4))))
    assert zs == {(s, z) for s in ("low", "high") for z in grid_values(F(1, 4))}


def test_patchwork_tables_split_dipoles():
    # per-task thresholds differ, so table groups fragment and fewer
    # dipoles appear than the homogeneous count
    config = small_config(n=2, ell=64, eps=F(1, 4), seed=3)
    clique = sample_multi_clique(config)
    thresholds = {
        e.id: PiecewiseLinear([(0, 0), (1, 1 if e.id % 2 else 2)])
        for e in clique.edges if e.a != e.b
    }
    spec = task_independent(thresholds)
    homogeneous = find_dipoles(VCG, clique, F(1, 4))
    patchwork = find_dipoles(oracle(spec), clique, F(1, 4))
    assert len(patchwork[(0, 1)]) <= len(homogeneous[(0, 1)])


def tables_for(clique, orc, eps):
    tables = edge_tables(orc, clique, eps)
    dipoles = find_dipoles(orc, clique, eps, tables=tables)
    return assemble_pair_tables(clique, tables, dipoles)


def test_select_root_and_z_vcg():
    config = small_config(seed=1)
    clique = sample_multi_clique(config)
    pair_tables = tables_for(clique, VCG, config.eps)
    sel = select_root_and_z(clique, pair_tables, config.eps, config.n)
    # identity tables: every (root, z) clears the bar; counting total is
    # 6 ordered pairs times sum of the grid = 15
    assert all(c["meets_bar"] for c in sel["candidates"])
    assert sel["counting_total"] == 15
    assert sel["counting_total"] >= 3 * (4 - 2)


def test_select_rejects_constant_zero():
    config = small_config(seed=1)
    clique = sample_multi_clique(config)
    pair_tables = tables_for(clique, oracle(constant("b")), config.eps)
    with pytest.raises(NoNiceStar):
        select_root_and_z(clique, pair_tables, config.eps, config.n)


def test_nice_multi_star_and_box_search():
    config = small_config(seed=0)
    clique = sample_multi_clique(config)
    pair_tables = tables_for(clique, VCG, config.eps)
    sel = select_root_and_z(clique, pair_tables, config.eps, config.n,
                            min_multiplicity=config.q)
    nice = find_nice_multi_star(VCG, clique, config, sel, pair_tables)
    multi = nice["multi_star"]
    assert multi.multiplicity() >= config.q
    delta = 4 ** (config.n - 1) * config.nu
    star, report, attempts = find_box_star(VCG, clique, multi, delta, budget=16)
    assert report.is_box and len(attempts) == 1  # first candidate works


def test_box_search_budget_zero():
    config = small_config(seed=0)
    clique = sample_multi_clique(config)
    multi = MultiStar(0, {1: [0, 1], 2: [16, 17]})
    with pytest.raises(BoxNotFound):
        find_box_star(VCG, clique, multi, F(1, 1024), budget=0)


def test_box_search_repairs_one_bundled_pair_with_a_swap():
    # a split penalty on the pair (0, 2) spoils only the first candidate
    inst = Instance(3, [
        Edge(0, 0, 1, F(0), F(1, 2)), Edge(1, 0, 1, F(0), F(9, 16)),
        Edge(2, 0, 2, F(0), F(1, 2)), Edge(3, 0, 2, F(0), F(9, 16)),
    ])
    spec = affine_minimizer(pair_constants=[((0, 2), F(1, 4))])
    multi = MultiStar(0, {1: [0, 1], 2: [2, 3]})
    star, report, attempts = find_box_star(oracle(spec), inst, multi,
                                           F(1, 64), budget=8)
    assert report.is_box
    assert len(attempts) == 2  # the first star fails, one swap repairs it
    assert set(star.edges) != {0, 2}


def test_witness_self_verifies():
    config = small_config(seed=0)
    result = run_pipeline(VCG, config)
    assert result.ok
    report = result.report
    # recompute everything from the serialized instance
    restored = parse_instance(serialize_instance(report.instance))
    assert makespan(restored, report.allocation) == report.mech_makespan
    opt_value, _ = opt_makespan(restored)
    assert opt_value == report.opt_makespan
    assert report.ratio == report.mech_makespan / report.opt_makespan
    assert report.mech_makespan >= report.makespan_floor
    assert report.opt_makespan <= (1 + config.eps) * report.z
    assert report.opt_makespan > 0


def test_pipeline_reports_failure_for_constant_zero():
    result = run_pipeline(oracle(constant("b")), small_config(seed=0))
    assert not result.ok
    assert result.failure_stage == "select"


def test_continuity_stage_clean_for_vcg():
    result = run_pipeline(VCG, small_config(seed=0))
    stage = next(s for s in result.stages if s["stage"] == "continuity")
    assert stage["resampled_edges"] == []


class _JumpAtOracle:
    """One edge's threshold jumps at a chosen opposite-side value.

    Orientation is fixed at construction (probe side vs value side), so the
    rule is a pure function of the instance: the probe side wins the target
    edge iff its value is below s + 1/2 [s >= jump_at].  Other edges take
    the plain minimum.
    """

    def __init__(self, edge_id, probe_side, jump_at):
        self.edge_id = edge_id
        self.probe_side = probe_side
        self.jump_at = jump_at

    def __call__(self, instance):
        from truthlab.core import Allocation

        assignment = {}
        for e in instance.edges:
            if e.a == e.b:
                assignment[e.id] = e.a
            elif e.id == self.edge_id:
                other = e.other(self.probe_side)
                s = e.value_on(other)
                psi = s + F(1, 2) if s >= self.jump_at else s
                assignment[e.id] = (
                    self.probe_side if e.value_on(self.probe_side) < psi else other
                )
            else:
                assignment[e.id] = e.a if e.va <= e.vb else e.b
        return Allocation(assignment)


def test_continuity_resamples_a_jump_edge():
    config = small_config(n=2, ell=1, eps=F(1, 2), seed=3)
    clique = sample_multi_clique(config)
    edge = next(e for e in clique.edges if e.a != e.b)
    zero_side = edge.a if edge.va == 0 else edge.b
    v = max(edge.va, edge.vb)
    orc = _JumpAtOracle(edge.id, zero_side, v)
    fixed, resampled = ensure_continuity(orc, clique, config)
    assert resampled == [edge.id]
    new_edge = fixed.task(edge.id)
    assert max(new_edge.va, new_edge.vb) != v


def test_continuity_hard_errors_after_retries(monkeypatch):
    from truthlab import boundary
    from truthlab.errors import CertificateMismatch

    monkeypatch.setattr(boundary.BoundaryProbe, "suspected_discontinuity",
                        lambda self, s: True)
    config = small_config(n=2, ell=1, eps=F(1, 2), seed=3)
    clique = sample_multi_clique(config)
    with pytest.raises(CertificateMismatch):
        ensure_continuity(VCG, clique, config)


def test_pipeline_deterministic_across_jobs():
    from truthlab.reportio import dumps_canonical

    res1 = run_pipeline(VCG, small_config(seed=4, jobs=1))
    res8 = run_pipeline(VCG, small_config(seed=4, jobs=8))
    assert res1.ok and res8.ok
    assert dumps_canonical(res1.report.to_doc()) == dumps_canonical(res8.report.to_doc())


def bk_fixture_instance():
    return Instance(3, [
        Edge(0, 0, 1, F(0), F(1, 2)), Edge(1, 0, 1, F(0), F(5, 8)),
        Edge(2, 0, 2, F(0), F(1, 2)), Edge(3, 0, 2, F(0), F(5, 8)),
    ])


def test_estimate_bk_vcg_is_zero():
    res = estimate_bk(VCG, bk_fixture_instance(), 0, {1: [0, 1], 2: [2, 3]},
                      sample_count=4, nu=F(1, 4096))
    assert res["frequency"] == 0


def test_estimate_bk_all_pairs_penalty_is_one():
    pairs = [((a, b), F(1, 4)) for a in (0, 1) for b in (2, 3)]
    spec = affine_minimizer(pair_constants=pairs)
    res = estimate_bk(oracle(spec), bk_fixture_instance(), 0,
                      {1: [0, 1], 2: [2, 3]}, sample_count=4, nu=F(1, 4096))
    assert res["frequency"] == 1


def test_estimate_bk_rejects_zero_samples():
    with pytest.raises(PreconditionViolated):
        estimate_bk(VCG, bk_fixture_instance(), 0, {1: [0, 1], 2: [2, 3]},
                    sample_count=0, nu=F(1, 4096))


def test_witness_floor_formula():
    # the reported makespan floor is z + (1-3 eps)(n-1) z - 2(n-1) delta
    config = small_config(seed=0)
    result = run_pipeline(VCG, config)
    r = result.report
    n = config.n
    expected = r.z + (1 - 3 * config.eps) * (n - 1) * r.z - 2 * (n - 1) * r.delta
    assert r.makespan_floor == expected
