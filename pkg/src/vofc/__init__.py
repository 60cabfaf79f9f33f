"""Value-oriented combination of multi-provider net-load forecasts for unit commitment."""

__version__ = "0.1.0"
