"""truthlab: a laboratory for truthful unrelated-machines scheduling.

Exact-rational scheduling instances, a zoo of deterministic allocation
oracles, weak-monotonicity verification, threshold (critical value)
probing, allocation-region geometry, and an adversarial pipeline that
certifies approximation-ratio lower-bound witnesses per mechanism.
"""

from .adversary import (
    AdversaryConfig,
    DipoleSet,
    WitnessReport,
    build_witness,
    dipole_clique_bound,
    estimate_bk,
    find_box_star,
    find_dipoles,
    find_nice_multi_star,
    recurrence_bound,
    run_pipeline,
    sample_multi_clique,
    select_root_and_z,
)
from .boundary import (
    BoundaryProbe,
    BoundaryTable,
    alpha_bounds_check,
    bounded_slope_check,
    lipschitz_check,
    quantize,
    sibling_independence_check,
    young_check,
)
from .core import (
    Allocation,
    Edge,
    Instance,
    MultiStar,
    Star,
    makespan,
    opt_makespan,
    parse_instance,
    serialize_instance,
)
from .geometry import (
    BoxReport,
    PairShape,
    RegionFacets,
    base_case_check,
    classify_pair,
    find_c4,
    is_box,
    is_chopped_off_box,
    is_nice_star,
    probe_region,
    shift_to_corner,
)
from .mechanisms import (
    MechanismSpec,
    PiecewiseLinear,
    affine_minimizer,
    allocate,
    bundling,
    constant,
    mechanism_from_doc,
    mechanism_to_doc,
    oracle,
    parse_mechanism,
    payments,
    serialize_mechanism,
    task_independent,
    truthfulness_probe,
    vcg,
    window_fixture,
)
from .truthcheck import (
    SamplerConfig,
    SweepReport,
    WmonViolation,
    agreement_check,
    restriction_check,
    wmon_pair,
    wmon_sweep,
)
from .values import DEFAULT_TOL, format_rational, parse_rational, rational

__version__ = "0.1.0"
