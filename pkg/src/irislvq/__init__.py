"""Iris recognition: circle localization, rubber-sheet normalization, LBP
histogram features and a majority-voting ensemble of LVQ1 classifiers."""

__version__ = "0.1.0"
