"""Finite MDPs: construction, validation, state-law propagation and sampling."""
