"""CLI entry point and HTTP service."""
