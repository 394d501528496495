"""Approximate blocked fixed-point (Ax-BxP) arithmetic for DNN inference."""

__version__ = "0.1.0"
