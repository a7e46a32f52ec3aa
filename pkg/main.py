"""Main entry point for the stcmot desk-scale tracking toolkit."""

import os
import sys

# Get the absolute path of the directory containing main.py (project root)
_project_root = os.path.dirname(os.path.abspath(__file__))

# Add the project root to sys.path if it's not already there
# This allows for absolute imports from the project root (e.g., "from schemas import ...")
if _project_root not in sys.path:
    sys.path.insert(0, _project_root)

from cli.stcmot_cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
