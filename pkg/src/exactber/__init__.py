"""Exact bit error probability of Viterbi decoding for convolutional encoders."""

__version__ = "0.1.0"
