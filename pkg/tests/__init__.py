"""
Test suite for xner-transfer.
"""
