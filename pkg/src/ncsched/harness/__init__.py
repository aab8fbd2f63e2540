"""Experiment harness: configuration, training, baselines, evaluation and the CLI."""
