"""Contextual union-of-polytopes uncertainty sets for robust unit commitment."""

__version__ = "0.1.0"

from .calibration import CalibratedRadius, calibrate, order_rank, union_score  # noqa: E402
from .dispatch import (  # noqa: E402
    CcgConfig,
    UcInstance,
    assemble,
    evaluate_reliability,
    solve_ccg,
    solve_deterministic,
    solve_saa,
    solve_subproblem_enum,
    solve_subproblem_milp,
)
from .gmm import ConditionalGmm, JointGmm, condition, fit_gmm, sample_conditional  # noqa: E402
from .sets import (  # noqa: E402
    BoxSet,
    CausSet,
    UosBaselineSet,
    build_box,
    build_caus,
    build_uos_baseline,
    encode_milp,
    make_directions,
    membership,
)
from .solver import LinearProgram, SolveOptions, check_feasibility, solve  # noqa: E402

__all__ = [
    "BoxSet", "CalibratedRadius", "CausSet", "CcgConfig", "ConditionalGmm", "JointGmm",
    "LinearProgram", "SolveOptions", "UcInstance", "UosBaselineSet", "assemble", "build_box",
    "build_caus", "build_uos_baseline", "calibrate", "check_feasibility", "condition",
    "encode_milp", "evaluate_reliability", "fit_gmm", "make_directions", "membership",
    "order_rank", "sample_conditional", "solve", "solve_ccg", "solve_deterministic",
    "solve_saa", "solve_subproblem_enum", "solve_subproblem_milp", "union_score",
]
