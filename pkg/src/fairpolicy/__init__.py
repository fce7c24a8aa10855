"""fairpolicy: optimal sequential decision policies under causal-pathway
fairness constraints.

The pipeline: estimate impermissible path-specific effects by inverse
probability weighting or the g-formula, fit constrained "fair world"
mediator/sensitive models by penalized maximum likelihood, learn policies
(Q-learning, value search, g-estimation) against the fair distribution,
and verify that the induced joint satisfies the constraints.
"""

from .dataset import Dataset, DatasetError, read_csv, write_csv
from .discrete import DiscreteJoint
from .fairfit import (
    ConstraintCheck,
    FairModels,
    InfeasibleError,
    PseConstraint,
    SolverReport,
    fit_fair_models,
    verify_constraints,
)
from .formula import FormulaError, ModelFormula, build_design, formula_from_json, parse_formula
from .glm import Glm, GlmError, GlmInputError, GlmNonConvergence, fit_glm
from .pse import (
    DegenerateWeightError,
    PseEstimate,
    PseError,
    WeightsSummary,
    enumeration_pse,
    estimate_pse_multimediator,
    estimate_pse_plugin,
    estimate_pse_sak_ipw,
    estimate_pse_sy_ipw,
    population_ipw_pse,
)
from .stages import StageSpec, StageSpecError
from .synth import (
    BootstrapResult,
    DgpError,
    DgpSpec,
    Equation,
    bootstrap,
    dgp_from_json,
    generate,
    generate_induced,
    preset,
    single_stage_dgp,
    two_stage_dgp,
)

__version__ = "0.1.0"
