"""mapweld: weld frame-by-frame vector-map predictions into a maintained HD map."""

__version__ = "0.1.0"
