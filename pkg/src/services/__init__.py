"""Shared state, optimizers, learner loops, checkpoints and evaluation"""
