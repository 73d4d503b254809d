"""
CLI implementation of training callbacks.
Routes progress to the logger; the metrics file carries the per-iteration numbers.
"""

from src.training.callbacks import TrainingCallback
from src.utils.logger import logger


class CLICallback(TrainingCallback):
    """CLI implementation of training callbacks."""

    def on_phase(self, name: str, iterations: int) -> None:
        logger.info(f"Starting {name} phase ({iterations} iterations)")

    def on_progress(self, message: str) -> None:
        """Display progress message to terminal.

        Args:
            message: Progress message to display
        """
        logger.info(message)

    def on_error(self, error: str) -> None:
        logger.error(error)
