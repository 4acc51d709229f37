"""Safety-preserving cascaded QP control of a quadrotor under wind."""

__version__ = "0.1.0"
