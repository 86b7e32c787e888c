"""Hybrid-policy MPC for flying through a swinging gate of unknown dynamics."""
