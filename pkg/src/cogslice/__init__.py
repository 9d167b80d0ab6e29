"""Cognitive slice management: wbCQI regression pipeline and proactive control loop."""

__version__ = "0.1.0"
