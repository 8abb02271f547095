"""Discrete curve modulus, pencils, Poincare and BV diagnostics on weighted graphs."""
