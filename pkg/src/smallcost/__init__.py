"""Small proportional transaction cost asymptotics for portfolio choice."""

__version__ = "0.1.0"
