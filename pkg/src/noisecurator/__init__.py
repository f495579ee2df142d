"""Learn per-sample quality weights for noisily labelled data and sample clean subsets."""

__version__ = "0.1.0"
