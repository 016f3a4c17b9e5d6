"""Privacy-preserving coordination of sequential electricity and gas markets.

The package couples a Laplace obfuscation layer with an exact
fidelity-restoration solve so that a follower can hand its leader a
demand vector that is differentially private yet keeps the coordinated
clearing feasible and near its original optimum.

Layer map:

* :mod:`ppsm.lp`        - LP/QP solves with dual certificates
* :mod:`ppsm.bnb`       - branch and bound over binary variables
* :mod:`ppsm.markets`   - synthetic coupled markets + exact leader oracle
* :mod:`ppsm.privacy`   - adjacency, sensitivity, Laplace release
* :mod:`ppsm.predictors`- forecast stand-ins on obfuscated data
* :mod:`ppsm.fidelity`  - KKT/big-M restoration of the release
* :mod:`ppsm.mechanism` - the end-to-end pipeline, metrics, bound checks
* :mod:`ppsm.sweep`     - reproducible experiment grids
* :mod:`ppsm.cli`       - ``ppsm sweep|summarize|heatmap|verify``
"""

from .bnb import MixedBinaryProgram, NodeLimitExceeded, enumerate_mbp, solve_mbp
from .fidelity import (
    FidelityProblem,
    FidelityResult,
    FidelitySolveConfig,
    Variant,
    big_m_linearize,
    build_kkt,
    enumerate_fidelity_oracle,
    make_fidelity_problem,
    solve_fidelity,
)
from .lp import (
    KktReport,
    LinearProgram,
    LpSolution,
    NumericalFailure,
    Status,
    solve_lp,
    solve_qp,
    verify_kkt,
)
from .markets import (
    ChainInfeasible,
    EmCache,
    GenerationFailed,
    LeaderInfeasible,
    MarketInstance,
    PublicMarketData,
    StackelbergInfeasible,
    StackelbergSolution,
    generate_instance,
    instance_from_doc,
    instance_to_doc,
    solve_follower_chain,
    solve_full_stackelberg,
    solve_leader_given_duals,
)
from .mechanism import (
    MechanismError,
    MechanismTrace,
    PpsmConfig,
    RunRecord,
    check_theorem4,
    check_theorem5,
    evaluate,
    run_mechanism,
    trace_to_doc,
)
from .predictors import (
    FollowerEstimates,
    PredictionFailed,
    PredictorConfig,
    fallback_leader_view,
    predict_follower_view,
    predict_leader_view,
)
from .privacy import (
    ObfuscatedDemand,
    PrivacyParams,
    adjacent,
    identity_sensitivity,
    obfuscate,
)
from .serialize import Doc
from .sweep import InstanceDims, SweepSpec, heatmap_data, run_sweep, summarize

__version__ = "0.1.0"
