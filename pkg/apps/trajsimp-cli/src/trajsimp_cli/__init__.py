"""Command-line pipeline for query-driven trajectory simplification."""
