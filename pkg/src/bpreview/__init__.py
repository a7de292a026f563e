"""Best-practice review comment pipeline."""
