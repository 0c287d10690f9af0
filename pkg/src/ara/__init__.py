"""Adversarial risk analysis for sequential defend-attack games.

The defender faces an attacker who moves in alternating stages; the
attacker's choices are uncertainties from the defender's seat, modelled with
the attacker's own utilities and beliefs. `backward_induct` rolls the game up
stage by stage, `dynamic.Session` tracks a live game as moves and
observations arrive, and the CLI / HTTP service expose both.
"""

from .discretize import DEFAULT_BINS, DiscretizationResult, NodeReport, discretize_diagram
from .dynamic import Recommendation, Session, WhatIfResult, open_session, replay_session
from .errors import (
    DiscretizationError,
    DistributionError,
    EngineError,
    ExprEvalError,
    ExprSyntaxError,
    ImpossibleEvidenceError,
    ModelError,
    ModelFileError,
    QueryError,
    SessionError,
    StageError,
)
from .infer import CompiledNet, expected_utility, posterior_marginal
from .model import (
    ATTACKER,
    CHANCE,
    DECISION,
    DEFENDER,
    UTILITY,
    ContinuousDomain,
    DiagramBuilder,
    DiscreteDomain,
    ExpressionCpd,
    InfluenceDiagram,
    StateDef,
    TableCpd,
    ValidationReport,
    Variable,
    Violation,
    stage_order,
    validate_diagram,
)
from .modelio import canonical_json, load_model, model_hash, parse_model, save_model
from .solver import (
    GameSolution,
    StagePolicy,
    TiePolicy,
    TreeNode,
    backward_induct,
    build_stage_tree,
    rollback,
    solve_hybrid,
    solve_stage,
)

__version__ = "1.0.0"

__all__ = [
    "ATTACKER",
    "CHANCE",
    "DECISION",
    "DEFENDER",
    "UTILITY",
    "DEFAULT_BINS",
    "CompiledNet",
    "ContinuousDomain",
    "DiagramBuilder",
    "DiscreteDomain",
    "DiscretizationError",
    "DiscretizationResult",
    "DistributionError",
    "EngineError",
    "ExpressionCpd",
    "ExprEvalError",
    "ExprSyntaxError",
    "GameSolution",
    "ImpossibleEvidenceError",
    "InfluenceDiagram",
    "ModelError",
    "ModelFileError",
    "NodeReport",
    "QueryError",
    "Recommendation",
    "Session",
    "SessionError",
    "StageError",
    "StagePolicy",
    "StateDef",
    "TableCpd",
    "TiePolicy",
    "TreeNode",
    "ValidationReport",
    "Variable",
    "Violation",
    "WhatIfResult",
    "backward_induct",
    "build_stage_tree",
    "canonical_json",
    "discretize_diagram",
    "expected_utility",
    "load_model",
    "model_hash",
    "open_session",
    "parse_model",
    "posterior_marginal",
    "replay_session",
    "rollback",
    "save_model",
    "solve_hybrid",
    "solve_stage",
    "stage_order",
    "validate_diagram",
    "__version__",
]
