"""
Command-line surface: run configuration, subcommands and argument parsing.
"""
