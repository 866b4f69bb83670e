"""Self-supervised policy adaptation during deployment, at desk scale."""

__version__ = "0.1.0"
