# -*- coding: utf-8 -*-

"""Top-level package for dynstg_mamba."""

__author__ = """DynSTG-Mamba developers"""
__version__ = '0.1.0'
