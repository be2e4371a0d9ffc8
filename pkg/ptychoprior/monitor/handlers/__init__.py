"""
Handler packages
"""
