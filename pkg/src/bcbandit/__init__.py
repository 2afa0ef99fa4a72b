"""Broadcast-constrained contextual bandit simulation."""
