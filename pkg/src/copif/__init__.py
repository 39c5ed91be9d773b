"""Self-stabilizing collaborative PIF waves over a prefix-tree overlay."""
__version__ = "0.1.0"
