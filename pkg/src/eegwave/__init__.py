"""Dilated causal convolution classifiers for 4-class EEG segments, on a small numpy autodiff engine."""

__version__ = "0.1.0"
