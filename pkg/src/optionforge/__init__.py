"""Intrinsically motivated option learning on small enumerable environments."""
