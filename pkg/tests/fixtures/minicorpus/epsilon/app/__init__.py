"""Application package."""
VERSION = "1.0"
