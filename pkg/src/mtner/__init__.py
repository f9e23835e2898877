"""Multi-task BiLSTM-CRF sequence labeling engine."""

__version__ = "0.1.0"
