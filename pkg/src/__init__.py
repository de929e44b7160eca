"""AsyncRL - asynchronous actor-learner reinforcement learning on shared parameters"""

__version__ = "0.1.0"
