"""Thermal averages of finite quantum systems and their parameter derivatives."""

__version__ = "0.1.0"
