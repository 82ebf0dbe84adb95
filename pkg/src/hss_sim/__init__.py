"""Hybrid storage system simulator with coordinated RL placement and migration."""
__version__ = "0.1.0"
