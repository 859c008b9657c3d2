"""Environments: bandits, FrozenLake and CartPole."""
