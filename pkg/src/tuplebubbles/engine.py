"""Build and load orchestration tying the modules together."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .bayesnet import ModelParams, learn_network
from .catalog import AttributeType, Catalog, ForeignKey, declare_fk_graph, \
    infer_schema_from_file, load_table
from .config import EngineConfig
from .errors import ConfigError
from .estimator import BubbleModel, estimate_result
from .partition import PartitionConfig, build_bubble_index, create_bubbles, \
    create_join_bubbles
from .sql import bind, parse
from . import storage


def load_catalog(config: EngineConfig) -> Catalog:
    """Infer schemas (honoring overrides), attach keys, load every table."""
    schemas = []
    for relation in sorted(config.data):
        path = Path(config.data[relation])
        schema = infer_schema_from_file(path, relation=relation)
        for i, (attr, atype) in enumerate(schema.attributes):
            override = config.type_overrides.get((relation, attr))
            if override and override != atype.kind:
                schema.attributes[i] = (attr, AttributeType(override))
        if relation in config.primary_keys:
            schema.primary_key = config.primary_keys[relation]
        schema.foreign_keys = [
            ForeignKey(attr, ref_rel, ref_attr)
            for rel, attr, ref_rel, ref_attr in config.foreign_keys
            if rel == relation
        ]
        schemas.append(schema)
    fk_graph = declare_fk_graph(schemas)
    tables = {s.relation: load_table(config.data[s.relation], s) for s in schemas}
    return Catalog(tables, fk_graph)


def build_model(config: EngineConfig, catalog: Catalog | None = None) -> BubbleModel:
    """Full build: partition, optionally pre-join, learn networks, index."""
    config.validate()
    if catalog is None:
        catalog = load_catalog(config)
    part_cfg = PartitionConfig(theta=config.theta, k=config.k,
                               join_mode=config.join_mode)
    params = ModelParams(k_mcv=config.k_mcv, buckets=config.buckets,
                         samples=config.samples)
    bubbles = create_bubbles(catalog, part_cfg)
    if config.join_mode:
        bubbles += create_join_bubbles(catalog, catalog.fk_graph, part_cfg)
    networks = {}
    indexes = {}
    for bubble in bubbles:
        networks[bubble.id] = learn_network(bubble, params)
        indexes[bubble.id] = build_bubble_index(bubble)
    return BubbleModel(catalog=catalog, bubbles=bubbles,
                       networks=networks, indexes=indexes)


def save_model(model: BubbleModel, config: EngineConfig) -> Path:
    path = Path(config.model_dir)
    storage.save_model(model, path, config.to_dict())
    return path


def load_model(model_dir: str | Path, catalog: Catalog | None = None) \
        -> tuple[BubbleModel, EngineConfig]:
    """Load a model directory; the catalog is rebuilt from the configured
    data files when not supplied (dictionaries live with the raw data)."""
    manifest = storage.read_manifest(model_dir)
    config = EngineConfig.from_dict(manifest["config"])
    if catalog is None:
        catalog = load_catalog(config)
    model = storage.load_model(model_dir, catalog)
    return model, config


def answer_sql(model: BubbleModel, config: EngineConfig, sql: str,
               sigma=None, method: str | None = None, samples: int | None = None,
               seed: int | None = None, propagate: bool | None = None):
    """Parse, bind, and estimate one query with per-call overrides."""
    query = bind(parse(sql), model.catalog)
    return estimate_result(
        query, model,
        sigma=config.sigma if sigma is None else sigma,
        method=config.method if method is None else method,
        samples=config.samples if samples is None else samples,
        seed=config.seed if seed is None else seed,
        propagate=config.propagate if propagate is None else propagate,
    )
