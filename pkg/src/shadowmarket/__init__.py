"""Follower-market analytics and suspicious-following detection."""
__version__ = "0.1.0"
