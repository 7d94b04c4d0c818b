"""benchforge: dataset translation pipeline with quality gates, plus an
embedding-model benchmark evaluation harness."""

__version__ = "0.1.0"
