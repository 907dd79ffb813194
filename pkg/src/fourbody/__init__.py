"""Action minimization and collision exclusion for a structured four-body problem."""
