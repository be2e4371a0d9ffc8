"""
Route packages
"""
