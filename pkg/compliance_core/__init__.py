"""Simulation, sequence models, controller and experiments of the tendon-robot compliance lab."""
