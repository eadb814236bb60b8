"""Dynamic integrity rules derived from object life cycles, and a validator for them."""

from .analyzer import ChangeEvent, ChangeLog, Snapshot, Violation, analyze, evaluate, evaluate_all, load_changelog, load_snapshot
from .correspondence import CorrespondenceMap, StateBinding, parse_correspondence, validate_correspondence
from .errors import AnalysisError, DataError, Diagnostic, DQError, ModelError
from .olc import (
    OlcModel,
    ProcessDef,
    TransitionGraph,
    dominators,
    exclusive_pairs,
    parse_olc,
    predecessors,
    reachable,
    serialize_olc,
    transition_graph,
    validate_olc,
)
from .reporting import ViolationReport, aggregate, emit_json, emit_text
from .rules import IntegrityRule, RuleSet, derive_all, load_rules, render_rule, save_rules
from .schema import DbSchema, ForeignKey, LinkPath, Table, find_link_paths, parse_ddl, parse_schema, serialize_schema

__version__ = "0.1.0"
