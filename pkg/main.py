"""
Main Application Entry Point

Runs the snapshot compressive imaging toolkit command line, or serves the
HTTP API through ``python main.py serve`` (or ``uvicorn main:app``).

``--threads N`` pins the BLAS thread pools before numpy is first imported;
one thread makes training and decoding bitwise reproducible.
"""
import os
import sys

from app.config import configure_logging, pin_threads


def _pin_threads(argv):
    threads = os.getenv("SCI_THREADS")
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    if threads and threads.isdigit() and int(threads) > 0:
        pin_threads(int(threads))


_pin_threads(sys.argv[1:])

from app.api import create_app  # noqa: E402
from app.pipeline.cli import cli_dispatch  # noqa: E402

# FastAPI application instance for uvicorn and the test client
app = create_app()


if __name__ == "__main__":
    configure_logging()
    sys.exit(cli_dispatch(sys.argv[1:]))
