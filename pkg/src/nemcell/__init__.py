"""Frustrated nematic hybrid cell: equilibria, stability and bifurcations."""
