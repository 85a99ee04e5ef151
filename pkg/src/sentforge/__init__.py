"""Neural sentiment classification for Sinhala text, built on a small numpy autodiff engine."""

__version__ = "0.1.0"

LABELS = ("NEGATIVE", "NEUTRAL", "POSITIVE", "CONFLICT")
