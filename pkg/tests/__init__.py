"""
Test suite for the application
"""
