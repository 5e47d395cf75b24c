"""Configuration, experiment runners, validation suite and command line."""
