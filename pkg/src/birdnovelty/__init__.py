"""Bird vocalisation detection by novelty scoring against per-species GMMs."""

__version__ = "0.1.0"
