"""
Run registry.

Records train, bench and ablate runs (config, output directory, status, timestamps)
and their final metrics. Backed by SQLAlchemy Core.
"""

import os
from datetime import datetime, timezone

from sqlalchemy import Engine, delete, desc, insert, select, update

from src.store.database import create_db_engine, run_metrics, runs
from src.utils.logger import logger


class RunStore:
    def __init__(self, engine: Engine) -> None:
        self.engine = engine

    def list(self, kind: str | None = None) -> list[dict]:
        """Return all runs, most recent first."""
        query = select(runs).order_by(desc(runs.c.updated_at), desc(runs.c.run_id))
        if kind is not None:
            query = query.where(runs.c.kind == kind)
        with self.engine.connect() as conn:
            rows = conn.execute(query).fetchall()
        return [row._asdict() for row in rows]

    def create(self, run_id: str, kind: str, config_text: str, output_dir: str) -> None:
        now = _now()
        with self.engine.begin() as conn:
            conn.execute(
                insert(runs).values(
                    run_id=run_id,
                    kind=kind,
                    config_text=config_text,
                    output_dir=output_dir,
                    status="running",
                    created_at=now,
                    updated_at=now,
                )
            )

    def finish(self, run_id: str, status: str, metrics: dict[str, float] | None = None) -> None:
        """Set the final status and replace the run's metrics."""
        with self.engine.begin() as conn:
            conn.execute(update(runs).where(runs.c.run_id == run_id).values(status=status, updated_at=_now()))
            if metrics:
                conn.execute(delete(run_metrics).where(run_metrics.c.run_id == run_id))
                conn.execute(
                    insert(run_metrics),
                    [{"run_id": run_id, "key": k, "value": float(v)} for k, v in sorted(metrics.items())],
                )

    def metrics(self, run_id: str) -> dict[str, float]:
        with self.engine.connect() as conn:
            rows = conn.execute(
                select(run_metrics.c.key, run_metrics.c.value).where(run_metrics.c.run_id == run_id)
            ).fetchall()
        return {key: value for key, value in rows}


def open_run_store() -> RunStore | None:
    """Registry at KERNELVIS_DB_PATH; None (with a warning) when it cannot be opened."""
    db_path = os.getenv("KERNELVIS_DB_PATH", "data/kernelvis.db")
    try:
        return RunStore(create_db_engine(f"sqlite:///{db_path}"))
    except Exception as e:
        logger.warning(f"Run registry unavailable at {db_path}: {e}")
        return None


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
