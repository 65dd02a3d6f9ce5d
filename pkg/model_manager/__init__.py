"""Domain types, likelihood layers and priors of the fusion model."""
