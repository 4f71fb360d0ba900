"""Anchor-graph wayfinding: multi-session maps, routing and turn-by-turn guidance."""

__version__ = "0.1.0"
