"""GOES-16 ABI acquisition and site-cube conversion."""

__version__ = "0.1.0"

SITECUBE_FORMAT_VERSION = 1
