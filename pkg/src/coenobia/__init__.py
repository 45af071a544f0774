"""Segmentation, description and classification of Scenedesmus coenobia in microscope frames."""

__version__ = "0.1.0"
