"""Logging setup and the metrics sink"""
