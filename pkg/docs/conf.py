#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# dynstg_mamba documentation build configuration file.

import os
import sys

# Import the package from the source tree, not an installed copy.
sys.path.insert(0, os.path.dirname(os.path.abspath(os.path.dirname(__file__))))

import dynstg_mamba  # noqa: E402

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.autosummary',
    'sphinx.ext.napoleon',
    'sphinx.ext.mathjax',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'dynstg_mamba'
copyright = u"2026, DynSTG-Mamba developers"
version = dynstg_mamba.__version__
release = dynstg_mamba.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# numpy-style docstrings throughout the package
napoleon_google_docstring = False
napoleon_numpy_docstring = True

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'dynstg_mambadoc'

latex_documents = [
    ('index', 'dynstg_mamba.tex', u'dynstg_mamba Documentation',
     u'DynSTG-Mamba developers', 'manual'),
]

man_pages = [
    ('index', 'dynstg_mamba', u'dynstg_mamba Documentation',
     [u'DynSTG-Mamba developers'], 1)
]
