"""Approximate aggregation-query processing over tuple-bubble summaries.

Relations are horizontally partitioned into bubbles, each bubble is
summarized by a tree-shaped Bayesian network with compressed conditional
probability tables, and aggregation queries with equi-joins and range or
equality predicates are answered from those summaries alone.  An exact
executor and a q-error benchmark harness are included for evaluation.
"""

from .bayesnet import Bucket, ChowLiuNetwork, CompressedCPT, ModelParams, \
    chow_liu_structure, fit_cpt, learn_network, mutual_information
from .bench import BenchReport, exact_execute, generate_workload, q_error, \
    run_benchmark
from .catalog import AttributeType, Catalog, Column, FkGraph, ForeignKey, \
    Schema, Table, declare_fk_graph, infer_schema, infer_schema_from_file, \
    load_table
from .config import EngineConfig, parse_config
from .engine import answer_sql, build_model, load_catalog, load_model, save_model
from .errors import BindError, ConfigError, DataError, DegenerateNetworkError, \
    EngineError, ModelFormatError, ParseError, SqlError, UnanswerableQueryError
from .estimator import BubbleModel, Estimate, combine_estimates, \
    estimate_aggregate, estimate_count, estimate_result, order_chain, \
    propagate_evidence, select_bubble_combinations
from .inference import Distribution, per_value_distribution, \
    progressive_sampling, prune_irrelevant, selectivity, variable_elimination
from .partition import BubbleIndex, PartitionConfig, TupleBubble, \
    build_bubble_index, create_bubbles, create_join_bubbles
from .regions import CodeRegion, Predicate, ValueRegion
from .sql import BoundQuery, ParsedQuery, bind, parse, to_sql

__version__ = "0.1.0"
