"""Spectrum-sensing throughput simulator with GAN data augmentation."""

__version__ = "0.1.0"
