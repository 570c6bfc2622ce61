"""Content-adaptive rate-quality curve prediction."""
