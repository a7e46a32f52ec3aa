# stcmot-desk/cli/__init__.py
# Command-line layer: file formats, reporting and the click group in stcmot_cli.
