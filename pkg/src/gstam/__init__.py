"""Graph dataset distillation by matching structural attention maps of random GNNs."""

__version__ = "0.1.0"
