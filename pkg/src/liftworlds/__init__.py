"""Probabilistic relational models over unknown universes.

A template model (parfactors without constraints) is combined with a
constraint program and a declarative domain spec into a weighted set of
parameterised models; queries run on every model through a restricted
lifted variable elimination and come back as a weighted answer set, with
top-k, skyline, and trend selections on top.
"""

from .domains import (
    BetaBinomialDomain,
    DomainSpec,
    DomainWorld,
    EnumeratedDomain,
    FilterResult,
    FixedDomain,
    WorldFilter,
    beta_binomial_pmf,
    enumerate_worlds,
    filter_worlds,
)
from .engine import (
    Evidence,
    MarginalDistribution,
    OpRecord,
    QuerySpec,
    absorb,
    ground_ve,
    lift_multiply,
    lift_sum_out,
    lifted_query,
    split,
)
from .errors import (
    ConstraintsMisaligned,
    InferenceError,
    LiftworldsError,
    NotCountNormalized,
    ParseError,
    ValidationError,
)
from .io import (
    load_domain_spec,
    load_model,
    load_program,
    parse_domain_spec,
    parse_event,
    parse_model,
    parse_query,
)
from .model import (
    BOOLEAN,
    Constant,
    Constraint,
    ConstraintKind,
    GroundAtom,
    GroundFactor,
    Logvar,
    Parfactor,
    ParameterisedModel,
    PotentialTable,
    PRV,
    Range,
    TemplateModel,
    conditional_count,
    ground,
    project,
    resolve_top,
)
from .program import (
    Binding,
    ChoiceGroup,
    ConstraintWorld,
    Program,
    Rule,
    evaluate as evaluate_program,
    parse as parse_program,
    uniformize,
)
from .queries import (
    AnswerEntry,
    AnswerSet,
    EventProbe,
    Selection,
    SkippedModel,
    TrendReport,
    event_probability,
    query_all,
    skyline,
    top_k_model_prob,
    top_k_query_prob,
    trend_report,
)
from .universe import Provenance, UniverseModel, WeightedModel, expand, instantiate, manifest_rows

__version__ = "0.1.0"

__all__ = [
    "BOOLEAN",
    "AnswerEntry",
    "AnswerSet",
    "BetaBinomialDomain",
    "Binding",
    "ChoiceGroup",
    "Constant",
    "Constraint",
    "ConstraintKind",
    "ConstraintWorld",
    "ConstraintsMisaligned",
    "DomainSpec",
    "DomainWorld",
    "EnumeratedDomain",
    "EventProbe",
    "Evidence",
    "FilterResult",
    "FixedDomain",
    "GroundAtom",
    "GroundFactor",
    "InferenceError",
    "LiftworldsError",
    "Logvar",
    "MarginalDistribution",
    "NotCountNormalized",
    "OpRecord",
    "PRV",
    "Parfactor",
    "ParameterisedModel",
    "ParseError",
    "PotentialTable",
    "Program",
    "Provenance",
    "QuerySpec",
    "Range",
    "Rule",
    "Selection",
    "SkippedModel",
    "TemplateModel",
    "TrendReport",
    "UniverseModel",
    "ValidationError",
    "WeightedModel",
    "WorldFilter",
    "absorb",
    "beta_binomial_pmf",
    "conditional_count",
    "enumerate_worlds",
    "evaluate_program",
    "event_probability",
    "expand",
    "filter_worlds",
    "ground",
    "ground_ve",
    "instantiate",
    "lift_multiply",
    "lift_sum_out",
    "lifted_query",
    "load_domain_spec",
    "load_model",
    "load_program",
    "manifest_rows",
    "parse_domain_spec",
    "parse_event",
    "parse_model",
    "parse_program",
    "parse_query",
    "project",
    "query_all",
    "resolve_top",
    "skyline",
    "split",
    "top_k_model_prob",
    "top_k_query_prob",
    "trend_report",
    "uniformize",
]
