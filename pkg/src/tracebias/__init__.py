"""Screenshot-trace media-use measurement: classification, segmentation and bias diagnostics."""

__version__ = "0.1.0"
