from fractions import Fraction as F

import pytest

from truthlab.boundary import (
    BoundaryProbe,
    alpha_bounds_check,
    bounded_slope_check,
    lipschitz_check,
    probe_function,
    quantize,
    sibling_independence_check,
    young_check,
)
from truthlab.core import Edge, Instance
from truthlab.errors import NotMonotone, PreconditionViolated, Unbounded
from truthlab.mechanisms import (
    PiecewiseLinear,
    affine_minimizer,
    constant,
    oracle,
    task_independent,
    vcg,
    window_fixture,
)
from truthlab.values import DEFAULT_TOL

TOL = DEFAULT_TOL


def one_edge(n=2):
    return Instance(n, [Edge(0, 0, 1, F(0), F(1))])


def test_vcg_critical_value_is_opposing_value():
    probe = BoundaryProbe(oracle(vcg()), one_edge(), 0, 0)
    lo, hi = probe.critical_value(F(3))
    assert lo <= 3 <= hi and hi - lo <= TOL


def test_weighted_minimizer_critical_value():
    spec = affine_minimizer(multipliers={0: F(1), 1: F(2)})
    probe = BoundaryProbe(oracle(spec), one_edge(), 0, 0)
    lo, hi = probe.critical_value(F(1))
    assert lo <= 2 <= hi


def test_critical_value_at_zero():
    probe = BoundaryProbe(oracle(vcg()), one_edge(), 0, 0)
    lo, hi = probe.critical_value(F(0))
    assert lo <= 0 <= hi and hi <= TOL


def test_critical_value_monotone_in_opposing_value():
    spec = task_independent({0: PiecewiseLinear([(0, F(1, 8)), (1, F(1, 2)), (2, F(2))])})
    probe = BoundaryProbe(oracle(spec), one_edge(), 0, 0)
    samples = [F(k, 4) for k in range(0, 9)]
    intervals = [probe.critical_value(s) for s in samples]
    for (lo1, _), (_, hi2) in zip(intervals, intervals[1:]):
        assert lo1 <= hi2 + TOL


def test_pseudo_inverse_bracket_between_probes():
    # forward threshold 2x; the reverse probe must sit at y/2 within slack
    spec = affine_minimizer(multipliers={0: F(1), 1: F(2)})
    fwd = BoundaryProbe(oracle(spec), one_edge(), 0, 0)
    rev = BoundaryProbe(oracle(spec), one_edge(), 0, 1)
    for y in (F(1, 2), F(1), F(3, 2)):
        lo, hi = rev.critical_value(y)
        assert lo - TOL <= y / 2 <= hi + TOL
        flo, fhi = fwd.critical_value((lo + hi) / 2)
        assert flo - 2 * TOL <= y <= fhi + 2 * TOL


def test_probe_rejects_loops_and_foreign_sides():
    loop = Instance(2, [Edge(0, 1, 1, F(1), F(1))])
    with pytest.raises(PreconditionViolated):
        BoundaryProbe(oracle(vcg()), loop, 0, 1)
    with pytest.raises(PreconditionViolated):
        BoundaryProbe(oracle(vcg()), one_edge(3), 0, 2)


def test_window_oracle_detected_as_non_monotone():
    probe = BoundaryProbe(oracle(window_fixture(1, 2)), one_edge(), 0, 0)
    with pytest.raises(NotMonotone):
        probe.critical_value(F(1))


def test_always_winning_side_is_unbounded():
    probe = BoundaryProbe(oracle(constant("a")), one_edge(), 0, 0)
    with pytest.raises(Unbounded):
        probe.critical_value(F(1))


def test_quantize_identity_is_fixed_point():
    probe = BoundaryProbe(oracle(vcg()), one_edge(), 0, 0)
    table = quantize(probe, F(1, 4))
    assert table.values == [(F(1, 4), F(1, 4)), (F(1, 2), F(1, 2)),
                            (F(3, 4), F(3, 4)), (F(1), F(1))]
    assert not table.slope_flags


def test_quantize_affine_threshold():
    # threshold 2z - 1/10 (clamped at 0): floors to 1/4, 3/4, 5/4, 7/4
    g = PiecewiseLinear([(0, 0), (F(1, 20), 0), (F(1), F(19, 10))])
    probe = BoundaryProbe(oracle(task_independent({0: g})), one_edge(), 0, 0)
    table = quantize(probe, F(1, 4))
    assert table.values == [(F(1, 4), F(1, 4)), (F(1, 2), F(3, 4)),
                            (F(3, 4), F(5, 4)), (F(1), F(7, 4))]


def test_quantize_constant_zero_oracle():
    probe = BoundaryProbe(oracle(constant("b")), one_edge(), 0, 0)
    table = quantize(probe, F(1, 4))
    assert all(p == 0 for _, p in table.values)


def test_quantize_requires_integer_inverse_eps():
    probe = BoundaryProbe(oracle(vcg()), one_edge(), 0, 0)
    with pytest.raises(PreconditionViolated):
        quantize(probe, F(2, 5))


def test_table_invariants_hold():
    spec = affine_minimizer(multipliers={0: F(1), 1: F(3, 2)})
    probe = BoundaryProbe(oracle(spec), one_edge(3), 0, 0)
    table = quantize(probe, F(1, 8))
    previous = None
    for z, psi in table.values:
        if previous is not None:
            assert psi >= previous
        previous = psi
        exact = F(3, 2) * z
        assert 0 <= exact - psi < F(1, 8)
        assert psi < 3 * z  # no slope flags for ratio 3/2 < n = 3
    assert not table.slope_flags


def test_young_identity_equality_case():
    res = young_check(lambda x: x, lambda x: x, F(1), F(1, 64))
    assert res["passed"]
    assert res["target"] - res["lhs"] <= 10 * F(1, 64)


def test_young_doubling_case():
    res = young_check(lambda x: 2 * x, lambda x: x / 2, F(1), F(1, 64))
    assert res["passed"]
    # closed forms: 1 + 1/4 = 5/4 up to the left-sum deficit
    assert abs(res["lhs"] - F(5, 4)) < F(1, 8)


def test_young_step_function_case():
    step = lambda x: F(0) if x < F(1, 2) else F(1)
    inv = lambda x: F(0) if x == 0 else F(1, 2)
    res = young_check(step, inv, F(1), F(1, 64))
    assert res["passed"]


def test_young_rejects_decreasing_integrand():
    with pytest.raises(NotMonotone):
        young_check(lambda x: -x, lambda x: x, F(1), F(1, 8))


def test_young_on_probed_vcg_edge():
    fwd = BoundaryProbe(oracle(vcg()), one_edge(), 0, 0)
    rev = BoundaryProbe(oracle(vcg()), one_edge(), 0, 1)
    for a in (F(1, 2), F(1)):
        res = young_check(probe_function(fwd, "lo"), probe_function(rev, "lo"),
                          a, F(1, 32))
        assert res["passed"]


def test_bounded_slope_vcg_clean_at_three_machines():
    probe = BoundaryProbe(oracle(vcg()), one_edge(3), 0, 0)
    res = bounded_slope_check(probe, [F(k, 8) for k in range(1, 9)])
    assert res["passed"]


def test_bounded_slope_flags_ratio_four_minimizer():
    spec = affine_minimizer(multipliers={0: F(1), 1: F(4)})
    probe = BoundaryProbe(oracle(spec), one_edge(3), 0, 0)
    res = bounded_slope_check(probe, [F(k, 8) for k in range(1, 9)])
    assert not res["passed"] and len(res["flags"]) == 8


def test_bounded_slope_rejects_zero_sample():
    probe = BoundaryProbe(oracle(vcg()), one_edge(3), 0, 0)
    with pytest.raises(PreconditionViolated):
        bounded_slope_check(probe, [F(0)])


def sibling_pair_instance():
    return Instance(2, [Edge(0, 0, 1, F(0), F(1, 2)), Edge(1, 0, 1, F(0), F(1, 2))])


def test_sibling_independence_vcg_passes():
    inst = sibling_pair_instance()
    res = sibling_independence_check(
        oracle(vcg()), inst, 0, 1,
        [(F(0), F(1, 8)), (F(1, 4), F(0)), (F(0), F(2))],
    )
    assert res["passed"]


def test_sibling_independence_detects_pair_coupling():
    inst = sibling_pair_instance()
    spec = affine_minimizer(pair_constants=[((0, 1), F(1, 4))])
    res = sibling_independence_check(
        oracle(spec), inst, 0, 1, [(F(0), F(1, 64)), (F(0), F(2))],
    )
    assert not res["passed"]


def test_sibling_independence_zero_perturbation_trivial():
    inst = sibling_pair_instance()
    res = sibling_independence_check(oracle(vcg()), inst, 0, 1, [])
    assert res["passed"]


def star_pair_instance():
    return Instance(3, [Edge(0, 0, 1, F(0), F(1, 2)), Edge(1, 0, 2, F(0), F(1, 2))])


def test_lipschitz_zero_delta():
    inst = star_pair_instance()
    res = lipschitz_check(oracle(vcg()), inst, 0, 0, [{1: F(0)}])
    assert res["passed"] and res["cases"][0]["shift"] == 0


def test_lipschitz_vcg_independent():
    inst = star_pair_instance()
    res = lipschitz_check(oracle(vcg()), inst, 0, 0, [{1: F(1, 4)}, {1: F(2)}])
    assert res["passed"]
    assert all(c["shift"] <= 2 * TOL for c in res["cases"])


def test_lipschitz_tight_on_bundling_facet():
    # split penalty c = 1/4: for t1 on the bundling facet the threshold of
    # task 0 moves exactly by the l1 change
    c = F(1, 4)
    spec = affine_minimizer(pair_constants=[((0, 1), c)])
    inst = Instance(3, [Edge(0, 0, 1, F(0), F(1, 2)),
                        Edge(1, 0, 2, F(1, 2), F(1, 2))])
    delta = {1: F(1, 2) + c / 2}
    res = lipschitz_check(oracle(spec), inst, 0, 0, [delta])
    case = res["cases"][0]
    assert res["passed"]
    assert abs(case["shift"] - case["l1"]) <= 4 * TOL


def test_alpha_bounds_vcg():
    inst = Instance(3, [Edge(0, 0, 1, F(0), F(1)), Edge(1, 0, 2, F(0), F(1, 2))])
    res = alpha_bounds_check(oracle(vcg()), inst, 0, [0, 1])
    assert res["passed"]
    assert res["entries"][0]["alpha"] - 1 <= TOL


def test_alpha_bounds_constant_zero_fails_lower():
    inst = Instance(3, [Edge(0, 0, 1, F(0), F(1))])
    res = alpha_bounds_check(oracle(constant("b")), inst, 0, [0])
    assert not res["passed"]
    assert not res["entries"][0]["lower_ok"]


def test_alpha_bounds_weighted_minimizer():
    spec = affine_minimizer(multipliers={0: F(1), 1: F(2), 2: F(1)})
    inst = Instance(3, [Edge(0, 0, 1, F(0), F(1, 2))])
    res = alpha_bounds_check(oracle(spec), inst, 0, [0])
    assert res["passed"]
    assert abs(res["entries"][0]["alpha"] - 1) <= TOL


def test_alpha_bounds_requires_unit_range():
    inst = Instance(3, [Edge(0, 0, 1, F(0), F(3))])
    with pytest.raises(PreconditionViolated):
        alpha_bounds_check(oracle(vcg()), inst, 0, [0])
