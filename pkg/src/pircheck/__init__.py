"""pircheck: verifier and equivalence checker for a small parallel C-like language."""

__version__ = "0.1.0"
