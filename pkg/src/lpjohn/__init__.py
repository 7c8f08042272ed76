"""L_p John ellipsoids of log-concave functions."""

__version__ = "0.1.0"
