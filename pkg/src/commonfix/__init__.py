"""Numerical toolkit for common fixed points of two pairs of self-maps.

Checks contractive conditions built from two-variable auxiliary functions on
sampled point pairs, runs the alternating iteration that produces the common
fixed point, and probes the compatibility notions between map pairs.
"""
from .auxiliary import (
    AuditReport,
    AuxFunction,
    ControlFunction,
    audit_altering_distance,
    audit_condition_A,
    audit_phi,
    eval_phi,
    eval_psi,
    positive_grid,
    square_grid,
)
from .contraction import (
    ConditionForm,
    ConditionReport,
    MapQuadruple,
    check_inclusions,
    check_pair,
    falsify,
    majorant,
    verify,
)
from .errors import (
    ArgumentError,
    CommonFixError,
    ConfigurationError,
    CoverageError,
    DimensionError,
    EvaluationError,
    ParseError,
    SelfMapError,
    ValidationError,
)
from .expr import evaluate, parse, unparse
from .iteration import (
    Certificate,
    IterationConfig,
    IterationTrace,
    certify,
    check_compatible_on_sequence,
    check_weak_compatible_ordered,
    check_weakly_compatible,
    diagnose_cauchy,
    find_coincidence_points,
    jungck_iterate,
)
from .maps import PiecewiseMap, preimage
from .metric import Domain, Grid, Metric, SampleSet, Uniform, audit_metric, distance, sample
from .scenarios import Scenario, builtin, load, save

__version__ = "0.1.0"
