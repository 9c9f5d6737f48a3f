"""Runnable hybrid-program examples; each is an installable console script
so the orchestrator's classical runtime can exec it by path."""
