"""Coordination stack for image-guided robotic TMS over OpenIGTLink."""
__version__ = "0.1.0"
