"""Multi-task semantic communication simulator for vehicle-satellite links.

A convolutional codec compresses 34x34 grayscale traffic signs into small
latent blocks, ships them through a Rayleigh-faded satellite hop, and decodes
them for reconstruction or classification; a Gray-coded 16-QAM chain plus
SVM/NN classifiers provide the conventional baseline.
"""

__version__ = "0.1.0"
