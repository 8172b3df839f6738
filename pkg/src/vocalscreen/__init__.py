"""Speech-based depression screening from MFCC/LPC frequency-time features."""

__version__ = "0.1.0"
