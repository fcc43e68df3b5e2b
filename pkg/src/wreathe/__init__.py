"""Stochastic wreath process: generative group-theoretic shape model and
reversible-jump inference of generative histories from images."""

__version__ = "0.1.0"
