"""Core utilities: errors, logging, diagnostics, JSON I/O, worker pool."""
