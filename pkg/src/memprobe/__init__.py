"""memprobe: recover memorized training images from overparameterized
autoencoders via plug-and-play ADMM with blind mask estimation."""

__version__ = "0.1.0"
