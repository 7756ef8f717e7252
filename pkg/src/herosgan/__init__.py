"""Low-cost accelerometer enhancement with an unpaired CycleGAN, optimal-transport
feature supervision, and a modulated Laplace-energy regularizer."""

__version__ = "0.1.0"
