"""
DDTWA 自旋系综模拟器
"""

__version__ = "1.0.0"
