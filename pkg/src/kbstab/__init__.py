"""Toolkit for detecting, classifying and predicting real-world change in temporal KBs."""

from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
