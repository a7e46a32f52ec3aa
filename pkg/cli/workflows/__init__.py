# This file makes the 'workflows' directory a Python package.
# Each module holds one handle_* function backing a CLI command.
