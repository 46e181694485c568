"""Fair resource substitution on directed task networks."""

__version__ = "0.1.0"
