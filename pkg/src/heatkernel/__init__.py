"""Heat kernel estimates on connected sums of weighted half-lines."""
