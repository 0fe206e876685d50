# KGBridge - Source Package
"""
KGBridge

Knowledge-guided prompt learning for cross-domain sequential recommendation
without user overlap.
"""

__version__ = "0.1.0"
