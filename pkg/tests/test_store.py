"""
Tests for the run registry.
"""

import pytest

from src.store.database import create_db_engine
from src.store.run_store import RunStore, open_run_store


@pytest.fixture
def store(tmp_path):
    return RunStore(create_db_engine(f"sqlite:///{tmp_path / 'db' / 'runs.db'}"))


def test_create_and_list(store):
    store.create("train-1", "train", "[model]\n", "/tmp/a")
    store.create("bench-1", "bench", "", "/tmp/b")
    assert {run["run_id"] for run in store.list()} == {"train-1", "bench-1"}
    (run,) = store.list("train")
    assert run["status"] == "running"
    assert run["config_text"] == "[model]\n"
    assert store.list("ablate") == []


def test_finish_replaces_metrics(store):
    store.create("r", "train", "", "out")
    store.finish("r", "done", {"final_loss": 1.5, "ap_lite": 0.25})
    assert store.metrics("r") == {"final_loss": 1.5, "ap_lite": 0.25}
    store.finish("r", "done", {"final_loss": 0.5})
    assert store.metrics("r") == {"final_loss": 0.5}
    assert store.list()[0]["status"] == "done"


def test_finish_without_metrics_keeps_them(store):
    store.create("r", "train", "", "out")
    store.finish("r", "done", {"final_loss": 1.0})
    store.finish("r", "failed")
    assert store.metrics("r") == {"final_loss": 1.0}
    assert store.list()[0]["status"] == "failed"


def test_unknown_run_has_no_metrics(store):
    assert store.metrics("missing") == {}


def test_in_memory_engine():
    store = RunStore(create_db_engine("sqlite:///:memory:"))
    store.create("r", "bench", "", "out")
    assert len(store.list()) == 1


def test_open_run_store_uses_environment(tmp_path, monkeypatch):
    db_path = tmp_path / "nested" / "reg.db"
    monkeypatch.setenv("KERNELVIS_DB_PATH", str(db_path))
    store = open_run_store()
    store.create("r", "train", "", "out")
    assert db_path.exists()
    assert open_run_store().list()[0]["run_id"] == "r"
