"""Bundled data files (stopword list)."""
