# -*- coding: utf-8 -*-

"""Unit test package for dynstg_mamba."""
