"""Sequence labeling and text classification toolkit for scholarly
documents: CRF reference-string parsing, config-driven experiments,
evaluation, a CLI and an HTTP service."""

__version__ = "0.1.0"
