"""Simulated tasks, scripted mentors, trial execution and the learning loop."""
