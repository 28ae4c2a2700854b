"""Falling-object detection around buildings: classical pipeline and evaluation tools."""

__version__ = "0.1.0"
