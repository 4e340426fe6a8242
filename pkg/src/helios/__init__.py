"""Satellite channel forecasting and near-term solar PV nowcasting toolkit."""

__version__ = "0.1.0"

FORMAT_VERSION = 1
