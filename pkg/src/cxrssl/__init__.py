"""cxrssl: self-supervised pretraining and linear-evaluation toolkit for
chest X-ray classification."""

__version__ = "0.1.0"
