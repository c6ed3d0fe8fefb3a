"""Figure rendering for sweep, training and evaluation outputs."""
