"""EEG seizure detection pipeline: synthesis, features, detector, scoring."""

__version__ = "0.1.0"
