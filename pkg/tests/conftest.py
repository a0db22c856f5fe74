"""Shared fixtures: the two-table example dataset and synthetic databases."""

from __future__ import annotations

import numpy as np
import pytest

from tuplebubbles.config import EngineConfig
from tuplebubbles.engine import build_model, load_catalog

ORDERS_CSV = (
    "o_key,c_key,date,price\n"
    "1,1,01.01.2022,10\n"
    "2,2,15.02.2022,20\n"
    "3,4,02.03.2022,30\n"
    "4,4,10.03.2022,40\n"
    "5,1,05.03.2022,50\n"
    "6,2,20.01.2022,60\n"
)
CUSTOMER_CSV = (
    "c_key,name\n"
    "1,C1\n"
    "2,C2\n"
    "4,C4\n"
)

EXAMPLE_COUNT_SQL = (
    "SELECT COUNT(*) FROM orders o, customer c "
    "WHERE o.c_key = c.c_key AND c.name = 'C4' AND o.date >= '02.03.2022'"
)
EXAMPLE_SUM_SQL = EXAMPLE_COUNT_SQL.replace("COUNT(*)", "SUM(o.price)")


def write_example_csvs(directory) -> dict[str, str]:
    orders = directory / "orders.csv"
    customer = directory / "customer.csv"
    orders.write_text(ORDERS_CSV)
    customer.write_text(CUSTOMER_CSV)
    return {"orders": str(orders), "customer": str(customer)}


def example_config(directory, **overrides) -> EngineConfig:
    data = write_example_csvs(directory)
    base = dict(
        data=data,
        primary_keys={"orders": "o_key", "customer": "c_key"},
        foreign_keys=[("orders", "c_key", "customer", "c_key")],
        theta=3, k=2, join_mode=True, k_mcv=64, buckets=16,
        method="ve", model_dir=str(directory / "model"),
    )
    base.update(overrides)
    return EngineConfig(**base)


@pytest.fixture(scope="session")
def example_catalog(tmp_path_factory):
    cfg = example_config(tmp_path_factory.mktemp("example"))
    return load_catalog(cfg)


@pytest.fixture(scope="session")
def example_model_join(example_catalog, tmp_path_factory):
    cfg = example_config(tmp_path_factory.mktemp("example_join"))
    return build_model(cfg, example_catalog)


@pytest.fixture(scope="session")
def example_model_tables(example_catalog, tmp_path_factory):
    cfg = example_config(tmp_path_factory.mktemp("example_tb"),
                         theta=100, k=1, join_mode=False)
    return build_model(cfg, example_catalog)


def write_exactness_csv(directory, n_rows: int = 10_000, seed: int = 11) -> str:
    """Single-table database with small cardinalities and one strongly
    dependent attribute pair (cat = grp // 2), so exact CPTs are attainable
    and every partition learns the (cat, grp) edge."""
    rng = np.random.default_rng(seed)
    grp = rng.integers(0, 24, size=n_rows)
    cat = grp // 2
    size = rng.integers(1, 31, size=n_rows)
    flag = (grp + rng.integers(0, 3, size=n_rows)) % 8
    lines = ["grp,cat,size,flag"]
    for i in range(n_rows):
        lines.append(f"{grp[i]},{cat[i]},{size[i]},{flag[i]}")
    path = directory / "wide.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def exactness_config(directory, **overrides) -> EngineConfig:
    path = write_exactness_csv(directory)
    base = dict(
        data={"wide": path},
        theta=100_000, k=1, join_mode=False, k_mcv=64, buckets=8,
        method="ve", model_dir=str(directory / "model"),
    )
    base.update(overrides)
    return EngineConfig(**base)


@pytest.fixture(scope="session")
def exactness_setup(tmp_path_factory):
    directory = tmp_path_factory.mktemp("exact")
    cfg = exactness_config(directory)
    catalog = load_catalog(cfg)
    model = build_model(cfg, catalog)
    return cfg, catalog, model


CORRELATED_ROWS = 300_000
CORRELATED_CUSTOMERS = 150


def write_correlated_csvs(directory, n_rows: int = CORRELATED_ROWS,
                          n_customers: int = CORRELATED_CUSTOMERS,
                          seed: int = 5) -> dict[str, str]:
    """Two-table FK database where the fact's aggregation attribute depends
    on a dimension attribute: GOLD customers buy at ten times the price."""
    rng = np.random.default_rng(seed)
    keys = np.arange(1, n_customers + 1)
    gold = keys % 5 == 0
    segments = np.where(gold, "GOLD", np.where(keys % 3 == 0, "SILVER", "BRONZE"))
    regions = np.array(["north", "south", "east", "west", "mid"])[keys % 5]

    c_lines = ["c_key,segment,region"]
    for i in range(n_customers):
        c_lines.append(f"{keys[i]},{segments[i]},{regions[i]}")
    customer = directory / "customer.csv"
    customer.write_text("\n".join(c_lines) + "\n")

    ck = rng.integers(1, n_customers + 1, size=n_rows)
    is_gold = ck % 5 == 0
    base_price = rng.integers(1, 51, size=n_rows)
    price = np.where(is_gold, base_price * 10 + 500, base_price)
    month = rng.integers(0, 24, size=n_rows)
    day_month = month % 12 + 1
    year = 2021 + month // 12
    qty = rng.integers(1, 11, size=n_rows)

    o_lines = ["c_key,date,price,qty"]
    for i in range(n_rows):
        o_lines.append(f"{ck[i]},01.{day_month[i]:02d}.{year[i]},{price[i]},{qty[i]}")
    orders = directory / "orders.csv"
    orders.write_text("\n".join(o_lines) + "\n")
    return {"orders": str(orders), "customer": str(customer)}


def correlated_config(directory, data: dict[str, str], **overrides) -> EngineConfig:
    base = dict(
        data=data,
        primary_keys={"customer": "c_key"},
        foreign_keys=[("orders", "c_key", "customer", "c_key")],
        theta=500_000, k=3, join_mode=False, k_mcv=60, buckets=100,
        method="ps", model_dir=str(directory / "model"),
    )
    base.update(overrides)
    return EngineConfig(**base)


@pytest.fixture(scope="session")
def correlated_setup(tmp_path_factory):
    """(catalog, TB model, TB_J model, csv bytes, model dirs) at defaults."""
    directory = tmp_path_factory.mktemp("corr")
    data = write_correlated_csvs(directory)
    cfg_tb = correlated_config(directory, data,
                               model_dir=str(directory / "model_tb"))
    catalog = load_catalog(cfg_tb)
    model_tb = build_model(cfg_tb, catalog)

    cfg_tbj = correlated_config(directory, data, join_mode=True,
                                model_dir=str(directory / "model_tbj"))
    model_tbj = build_model(cfg_tbj, catalog)

    import os
    csv_bytes = sum(os.path.getsize(p) for p in data.values())
    return {
        "catalog": catalog,
        "tb": (cfg_tb, model_tb),
        "tbj": (cfg_tbj, model_tbj),
        "csv_bytes": csv_bytes,
    }
