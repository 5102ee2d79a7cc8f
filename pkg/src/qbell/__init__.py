"""Protocol engine and simulation lab for TCF-based proofs of quantumness."""

__version__ = "0.1.0"
