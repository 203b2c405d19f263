"""Audio-visual word classification with a from-scratch autodiff engine."""
__version__ = "0.1.0"
