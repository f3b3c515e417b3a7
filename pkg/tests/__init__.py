"""
Simlab Test Suite
"""
