"""Configuration, synthetic data, training, voting inference, checkpoints and CLI."""
