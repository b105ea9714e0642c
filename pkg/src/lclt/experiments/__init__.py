"""Config-driven experiment scenarios, rate fitting, and the lclt CLI."""
