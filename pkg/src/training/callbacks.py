"""
Abstract callback interface for training runs.
This allows different front ends (CLI, tests, notebooks) to report progress their own way.
"""

from abc import ABC


class TrainingCallback(ABC):
    """Base class for training callbacks; every hook is optional."""

    def on_phase(self, name: str, iterations: int) -> None:
        """Called when a training phase starts.

        Args:
            name: Phase name ("image" or "video")
            iterations: Number of iterations in the phase
        """
        pass

    def on_iteration(self, record) -> None:
        """Called after every optimizer step with its IterationRecord."""
        pass

    def on_progress(self, message: str) -> None:
        pass

    def on_error(self, error: str) -> None:
        """Called before a training error propagates.

        Args:
            error: Error message to display
        """
        pass


class NullCallback(TrainingCallback):
    pass
