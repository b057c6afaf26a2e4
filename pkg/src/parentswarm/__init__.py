"""Swarm-actuated tilting plane: plant, abstraction, control, stability and atlas tools."""
