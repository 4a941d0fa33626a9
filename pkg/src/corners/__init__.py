"""Corner functional, corner census and F_2^n regularity toolkit."""
__version__ = "0.1.0"
