"""Online continual-learning benchmark with an importance-regularized meta-learner (EMCL)."""

__version__ = "0.1.0"
