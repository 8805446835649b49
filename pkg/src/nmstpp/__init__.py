"""Neural marked spatio-temporal point process for football event streams."""

__version__ = "0.1.0"
