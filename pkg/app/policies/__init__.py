"""Policies: dense tables, preference models and softmax (extended) policies."""
