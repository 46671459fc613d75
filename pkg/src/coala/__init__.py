"""Learning-aware multi-agent policy gradients and an analytic IPD laboratory."""

__version__ = "0.1.0"
