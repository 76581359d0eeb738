"""
softmine test suite
"""
