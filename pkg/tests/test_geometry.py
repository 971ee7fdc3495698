import random
from fractions import Fraction as F

import pytest

from truthlab.core import Edge, Instance, Star
from truthlab.errors import DeltaTooLarge, NegativeValue, PreconditionViolated
from truthlab.geometry import (
    PairShape,
    base_case_check,
    classify_pair,
    find_c4,
    is_box,
    is_chopped_off_box,
    is_nice_star,
    probe_region,
    shift_to_corner,
)
from truthlab.mechanisms import (
    affine_minimizer,
    bundling,
    constant,
    oracle,
    task_independent,
    vcg,
)

RES = F(1, 256)


def two_leaf_instance(s0=F(1, 2), s1=F(1, 2)):
    return Instance(3, [Edge(0, 0, 1, F(0), s0), Edge(1, 0, 2, F(0), s1)])


def split_penalty(c=F(1, 8)):
    return affine_minimizer(pair_constants=[((0, 1), c)])


def flip_bonus(c=F(1, 8)):
    return affine_minimizer(pair_constants=[((0, 1), -c)])


def test_vcg_region_is_full_rectangle():
    inst = two_leaf_instance(F(1, 2), F(2, 3))
    report = probe_region(oracle(vcg()), inst, Star(0, [0, 1]), RES)
    c0 = report.facet([0])
    c1 = report.facet([1])
    assert abs(c0 - F(1, 2)) <= 2 * RES
    assert abs(c1 - F(2, 3)) <= 2 * RES
    assert report.facet([0, 1]) is None


def test_split_penalty_region_has_diagonal_facet():
    c = F(1, 8)
    inst = two_leaf_instance()
    report = probe_region(oracle(split_penalty(c)), inst, Star(0, [0, 1]), RES)
    singles = report.facet([0]) + report.facet([1])
    diag = report.facet([0, 1])
    assert diag is not None
    assert abs(diag - (F(1) + c)) <= 4 * RES  # s0 + s1 + c
    assert diag < singles


def test_single_edge_region_is_the_critical_value():
    inst = two_leaf_instance()
    report = probe_region(oracle(vcg()), inst, Star(0, [0]), RES)
    assert abs(report.facet([0]) - F(1, 2)) <= 2 * RES


def test_region_facet_consistency():
    inst = two_leaf_instance()
    report = probe_region(oracle(split_penalty()), inst, Star(0, [0, 1]), RES)
    for key, c in report.facets.items():
        if len(key) >= 2:
            assert c <= sum(report.facets[frozenset([i])] for i in key) + 4 * RES


def seeded_leaf_values(seed, count=20):
    rng = random.Random(seed)
    return [(F(rng.randint(8, 24), 32), F(rng.randint(8, 24), 32))
            for _ in range(count)]


def test_vcg_pairs_are_crossing():
    for s0, s1 in seeded_leaf_values(101, 8):
        rep = classify_pair(oracle(vcg()), two_leaf_instance(s0, s1), (0, 1), RES)
        assert rep["shape"] == PairShape.CROSSING, (s0, s1)


def test_split_penalty_pairs_are_quasi_bundling():
    for s0, s1 in seeded_leaf_values(102, 8):
        rep = classify_pair(oracle(split_penalty()), two_leaf_instance(s0, s1),
                            (0, 1), RES)
        assert rep["shape"] == PairShape.QUASI_BUNDLING, (s0, s1)
        assert rep["slope_check"]["passed"]
        assert abs(rep["cut_depth"] - F(1, 8)) <= 8 * RES


def test_flip_bonus_pairs_are_quasi_flipping():
    for s0, s1 in seeded_leaf_values(103, 8):
        rep = classify_pair(oracle(flip_bonus()), two_leaf_instance(s0, s1),
                            (0, 1), RES)
        assert rep["shape"] == PairShape.QUASI_FLIPPING, (s0, s1)
        assert abs(rep["flip_gap"] - F(1, 8)) <= 8 * RES


def test_group_bundling_is_fully_bundling():
    spec = bundling([[0, 1]])
    rep = classify_pair(oracle(spec), two_leaf_instance(), (0, 1), RES)
    assert rep["shape"] == PairShape.FULLY_BUNDLING


def test_half_bundling_via_pattern_constant():
    # kill the "only task 0 at the root" option: no own facet for task 1
    spec = affine_minimizer(pattern_constants=[({0: 0, 1: 2}, F(100))])
    rep = classify_pair(oracle(spec), two_leaf_instance(), (0, 1), RES)
    assert rep["shape"] == PairShape.HALF_BUNDLING_AT_SECOND


def test_degenerate_pair_for_constant_oracle():
    rep = classify_pair(oracle(constant("b")), two_leaf_instance(), (0, 1), RES)
    assert rep["shape"] == PairShape.DEGENERATE


def test_any_single_edge_star_is_a_box():
    inst = two_leaf_instance()
    for spec in (vcg(), split_penalty(), bundling([[0, 1]])):
        rep = is_box(oracle(spec), inst, Star(0, [0]), F(1, 1024))
        assert rep.is_box


def test_vcg_star_is_a_box():
    inst = two_leaf_instance(F(1, 2), F(2, 3))
    rep = is_box(oracle(vcg()), inst, Star(0, [0, 1]), F(1, 1024))
    assert rep.is_box
    assert rep.probe_point[0] == rep.thresholds[0] - F(1, 1024)


def test_split_penalty_star_is_not_a_box_below_cut_depth():
    rep = is_box(oracle(split_penalty(F(1, 8))), two_leaf_instance(),
                 Star(0, [0, 1]), F(1, 64))
    assert not rep.is_box


def test_task_independent_stars_are_always_boxes():
    spec = task_independent({})
    inst = two_leaf_instance(F(1, 2), F(3, 4))
    for delta in (F(1, 16), F(1, 256), F(1, 4096)):
        assert is_box(oracle(spec), inst, Star(0, [0, 1]), delta).is_box


def test_box_delta_too_large():
    with pytest.raises(DeltaTooLarge):
        is_box(oracle(vcg()), two_leaf_instance(), Star(0, [0, 1]), F(2))


def nice_star_instance(n=3, z=F(1, 2), eps=F(1, 10)):
    bump = z * eps / 2
    return Instance(n, [
        Edge(i - 1, 0, i, F(0), z + bump) for i in range(1, n)
    ])


def test_vcg_star_is_nice():
    z, eps = F(1, 2), F(1, 10)
    inst = nice_star_instance(3, z, eps)
    res = is_nice_star(oracle(vcg()), inst, Star(0, [0, 1]), eps, z)
    assert res["passed"]
    assert res["sum_psi"] >= (1 - 3 * eps) * 2 * z


def test_constant_zero_star_is_not_nice():
    z, eps = F(1, 2), F(1, 10)
    inst = nice_star_instance(3, z, eps)
    res = is_nice_star(oracle(constant("b")), inst, Star(0, [0, 1]), eps, z)
    assert not res["passed"]


def test_nice_star_rejects_zero_eps():
    inst = nice_star_instance()
    with pytest.raises(PreconditionViolated):
        is_nice_star(oracle(vcg()), inst, Star(0, [0, 1]), F(0), F(1, 2))


def test_shift_to_corner_single_edge():
    inst = Instance(2, [Edge(0, 0, 1, F(0), F(1))])
    shifted = shift_to_corner(oracle(vcg()), inst, Star(0, [0]), F(1, 64))
    # threshold 1 minus 4^1/64 = 15/16, up to probe slack
    assert abs(shifted.task(0).va - F(15, 16)) <= F(1, 2**31)


def test_shift_to_corner_rejects_overshoot():
    inst = Instance(2, [Edge(0, 0, 1, F(0), F(1))])
    with pytest.raises(NegativeValue):
        shift_to_corner(oracle(vcg()), inst, Star(0, [0]), F(1))


def chopped_instance(n=4, s=F(7, 8)):
    return Instance(n, [Edge(i - 1, 0, i, F(0), s) for i in range(1, n)])


def test_vcg_three_star_is_chopped_off_box():
    inst = chopped_instance()
    res = is_chopped_off_box(oracle(vcg()), inst, Star(0, [0, 1, 2]), F(1, 32))
    assert res["verdict"]


def test_pattern_gadget_is_chopped_but_not_box():
    # bonus for the all-leaves pattern cuts only the top corner, so every
    # 2-edge sub-star stays a box while the full star is cut
    cut = F(1, 4)
    spec = affine_minimizer(pattern_constants=[({0: 1, 1: 2, 2: 3}, -cut)])
    inst = chopped_instance()
    star = Star(0, [0, 1, 2])
    res = is_chopped_off_box(oracle(spec), inst, star, F(1, 32))
    assert res["verdict"]
    # a corner probe shallower than the cut (3 delta < cut) lands outside
    assert not is_box(oracle(spec), inst, star, F(1, 16)).is_box


def test_chopped_off_box_needs_three_edges():
    inst = two_leaf_instance()
    with pytest.raises(PreconditionViolated):
        is_chopped_off_box(oracle(vcg()), inst, Star(0, [0, 1]), F(1, 16))


def test_find_c4_complete_two_by_two():
    assert find_c4([[1, 1], [1, 1]]) == (0, 1, 0, 1)


def test_find_c4_perfect_matching_is_free():
    assert find_c4([[1, 0, 0], [0, 1, 0], [0, 0, 1]]) is None


def test_find_c4_dense_random_graphs():
    # 2 * ell * sqrt(ell) edges force a rectangle; verify the witness too
    ell = 16
    edges_needed = 128  # 2 * 16 * 4
    for seed in range(5):
        rng = random.Random(seed)
        cells = rng.sample(range(ell * ell), edges_needed)
        rows = [[0] * ell for _ in range(ell)]
        for c in cells:
            rows[c // ell][c % ell] = 1
        found = find_c4(rows)
        assert found is not None
        r1, r2, c1, c2 = found
        assert rows[r1][c1] and rows[r1][c2] and rows[r2][c1] and rows[r2][c2]


def base_case_instance():
    return Instance(3, [
        Edge(0, 0, 1, F(0), F(1, 2)),
        Edge(1, 0, 1, F(0), F(5, 8)),
        Edge(2, 0, 2, F(0), F(1, 2)),
        Edge(3, 0, 2, F(0), F(3, 4)),
    ])


def test_base_case_vcg_all_four_boxes():
    res = base_case_check(oracle(vcg()), base_case_instance(), 0,
                          {1: [0, 1], 2: [2, 3]}, F(1, 2048))
    assert len(res["box_stars"]) == 4


def test_base_case_single_pair_gadget_has_three_boxes():
    nu = F(1, 2048)
    spec = affine_minimizer(pair_constants=[((0, 2), F(1, 8))])
    res = base_case_check(oracle(spec), base_case_instance(), 0,
                          {1: [0, 1], 2: [2, 3]}, nu)
    assert len(res["box_stars"]) == 3
    assert (0, 2) not in res["box_stars"]
    assert res["bundle_depths"][(0, 2)] >= 32 * nu


def test_base_case_validates_leaf_structure():
    with pytest.raises(PreconditionViolated):
        base_case_check(oracle(vcg()), base_case_instance(), 0,
                        {1: [0, 1], 2: [2]}, F(1, 2048))
