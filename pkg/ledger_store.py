"""
Cross-run inequality ledger kept in a SQL database (SQLite by default).
"""

import hashlib
import json
import logging

import pandas as pd
from sqlalchemy import Column, Float, Integer, MetaData, String, Table, create_engine, delete, insert, text

from run_config import get_ledger_url

logger = logging.getLogger(__name__)

# ------------------------
# Tables
# ------------------------

metadata = MetaData()

runs = Table(
    "runs",
    metadata,
    Column("id", Integer, primary_key=True),
    Column("run_id", String, unique=True, nullable=False),
    Column("subcommand", String, nullable=False),
    Column("status", String, nullable=False),
    Column("seed", String),
    Column("regime", String),
    Column("eta", Float),
    Column("lambda_", Float),
    Column("iterations", Integer, default=0),
    Column("config", String),  # canonical JSON
)

inequality_ledger = Table(
    "inequality_ledger",
    metadata,
    Column("id", Integer, primary_key=True),
    Column("run_id", String, nullable=False, index=True),
    Column("inequality", String, nullable=False),
    Column("regime", String),
    Column("lhs", Float),
    Column("rhs_shape", String),
    Column("rhs_scale", Float),
    Column("inferred_constant", Float),
    Column("status", String),
    Column("parts", String),
    Column("eta", Float),
    Column("ud_besov", Float),
)

LEDGER_COLUMNS = ["run_id", "inequality", "regime", "lhs", "rhs_shape", "rhs_scale", "inferred_constant",
                  "status", "eta", "ud_besov", "parts"]


def run_identifier(config_dict, subcommand, label=""):
    """Deterministic id from the canonical config, so repeat runs replace their rows."""
    blob = json.dumps(config_dict, sort_keys=True, default=str) + subcommand + str(label)
    return f"{subcommand}-{hashlib.sha1(blob.encode('utf-8')).hexdigest()[:12]}"


# ------------------------
# Engine
# ------------------------

def get_engine(url=None):
    engine = create_engine(url or get_ledger_url())
    with engine.connect() as conn:
        conn.execute(text("SELECT 1"))
    return engine


def setup_ledger(url=None):
    """Engine with both ledger tables created on demand."""
    engine = get_engine(url)
    metadata.create_all(engine)
    return engine


def _finite_or_none(value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        return None
    return value if value == value and abs(value) != float("inf") else None


def store_run(engine, run_id, subcommand, status, seed=None, regime=None, eta=None, lambda_=None,
              iterations=0, config=None):
    record = {
        "run_id": run_id,
        "subcommand": subcommand,
        "status": status,
        "seed": None if seed is None else str(seed),
        "regime": regime,
        "eta": _finite_or_none(eta),
        "lambda_": _finite_or_none(lambda_),
        "iterations": int(iterations),
        "config": json.dumps(config or {}, sort_keys=True, default=str),
    }
    with engine.begin() as conn:
        conn.execute(delete(runs).where(runs.c.run_id == run_id))
        conn.execute(insert(runs), [record])
    logger.debug("stored run %s (%s)", run_id, status)


def store_inequalities(engine, rows):
    """Insert ledger rows, replacing earlier rows of the same runs. Returns the count."""
    if not rows:
        return 0
    records = []
    for row in rows:
        record = {key: row.get(key) for key in LEDGER_COLUMNS}
        for key in ("lhs", "rhs_scale", "inferred_constant", "eta", "ud_besov"):
            record[key] = _finite_or_none(record[key])
        records.append(record)
    run_ids = sorted({r["run_id"] for r in records})
    with engine.begin() as conn:
        conn.execute(delete(inequality_ledger).where(inequality_ledger.c.run_id.in_(run_ids)))
        conn.execute(insert(inequality_ledger), records)
    return len(records)


def read_ledger(engine):
    query = inequality_ledger.select().order_by(inequality_ledger.c.run_id, inequality_ledger.c.id)
    with engine.connect() as conn:
        frame = pd.read_sql(query, conn)
    return frame[LEDGER_COLUMNS]


def read_runs(engine):
    with engine.connect() as conn:
        frame = pd.read_sql(runs.select().order_by(runs.c.run_id), conn)
    return frame.drop(columns=["id"])
