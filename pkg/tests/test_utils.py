"""
Tests for the logger setup and the worker pool.
"""

import logging
import threading

from src.utils.logger import setup_logger
from src.utils.parallel import ordered_map, worker_count


class TestLogger:
    def test_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("KERNELVIS_LOG_LEVEL", "warning")
        log = setup_logger("kernelvis.test.level")
        assert log.level == logging.WARNING
        assert not log.propagate
        assert len(log.handlers) == 1

    def test_file_handler(self, tmp_path):
        path = tmp_path / "logs" / "run.log"
        log = setup_logger("kernelvis.test.file", level="INFO", log_file=path)
        log.info("phase started")
        for handler in log.handlers:
            handler.flush()
        assert "INFO - phase started" in path.read_text()
        # a second setup replaces the handlers instead of stacking them
        assert len(setup_logger("kernelvis.test.file", level="INFO", log_file=path).handlers) == 2


class TestOrderedMap:
    def test_keeps_input_order(self, monkeypatch):
        monkeypatch.setenv("KERNELVIS_THREADS", "4")
        assert ordered_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]

    def test_single_worker_runs_inline(self, monkeypatch):
        monkeypatch.setenv("KERNELVIS_THREADS", "1")
        threads = ordered_map(lambda _: threading.get_ident(), range(3))
        assert set(threads) == {threading.get_ident()}

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("KERNELVIS_THREADS", "0")
        assert worker_count() == 1
        monkeypatch.setenv("KERNELVIS_THREADS", "many")
        assert worker_count() >= 1
        assert ordered_map(str, []) == []
