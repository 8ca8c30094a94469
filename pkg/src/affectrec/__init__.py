"""Facial affect recognition: residual CNN + LSTM pretrained on categorical
emotions and fine-tuned for arousal/valence regression."""

__version__ = "0.1.0"
