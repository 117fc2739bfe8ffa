"""
cls2det - classifier-to-detector knowledge distillation at desk scale.
"""

__version__ = "0.1.0"
