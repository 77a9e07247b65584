"""Classical mechanics recovered as quantum dynamics constrained to coherent-state manifolds."""

__version__ = "0.1.0"
