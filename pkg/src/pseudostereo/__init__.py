"""Pseudo stereo-pair synthesis from single images and monocular inverse depth."""

__version__ = "0.1.0"
