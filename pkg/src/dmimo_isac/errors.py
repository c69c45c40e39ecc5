class ConfigurationError(ValueError):
    """Invalid or infeasible configuration, detected before any computation."""
