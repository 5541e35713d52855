"""Unsupervised bag-of-words person re-identification toolchain."""

from bowreid.kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
