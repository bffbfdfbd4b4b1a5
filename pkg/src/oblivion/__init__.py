"""Exact game-theoretic attributions for ensembles of oblivious decision trees."""

from .engine import (
    AdditiveModel,
    AttributionTables,
    TreeTable,
    explain,
    explain_additive,
    explain_batch,
    precompute_ensemble,
    precompute_tree_table,
    term_count_audit,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    DomainError,
    EvaluationError,
    FormatError,
    InputShapeError,
    ObliviousError,
)
from .games import (
    BANZHAF_FAMILY,
    SHAPLEY_FAMILY,
    CoefficientFamily,
    FeaturePartition,
    GameValueSpec,
)
from .oracle import (
    GameOracle,
    brute_force_table,
    brute_force_value,
    closed_form_marginal_game,
    empirical_marginal_game,
    eject_game,
    path_dependent_game,
)
from .trees import (
    Dataset,
    Ensemble,
    GenericTree,
    Node,
    ObliviousTree,
    estimate_leaf_probabilities,
    obliviousize,
    predict,
    route_to_leaf,
)

__version__ = "0.1.0"
