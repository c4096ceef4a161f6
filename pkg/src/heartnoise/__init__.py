"""Noise-robustness benchmarking for heart-sound classifiers.

Build SNR-controlled noisy heart-sound datasets, extract spectrogram
features, train linear-SVM and CNN baselines, and break accuracy down by
noise type, grouping, duration, SNR and signal duration.
"""

__version__ = "0.1.0"
