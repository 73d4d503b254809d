"""
CLI entry point for kernelvis
"""

from dotenv import load_dotenv

# Load environment variables before the logger reads KERNELVIS_LOG_LEVEL
load_dotenv()

from src.cli.runner import run_cli  # noqa: E402

if __name__ == "__main__":
    run_cli()
