"""Detection, association and tracking for LFMCW mmWave radar."""

__version__ = "0.1.0"
