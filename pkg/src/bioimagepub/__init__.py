"""Publish annotated bioimaging datasets in an AI-ready layout to a hub."""

__version__ = "0.1.0"
