"""Structural analysis and index reduction by embedding for polynomial IDAEs."""
