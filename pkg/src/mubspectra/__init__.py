"""Second-moment spectral analysis over mutually unbiased bases."""

__version__ = "0.1.0"
