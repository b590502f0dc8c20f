"""Almost-sure reachability toolkit for continuous-time stochastic systems."""

__version__ = "0.1.0"
