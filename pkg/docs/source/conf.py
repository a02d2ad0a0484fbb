# pylint: disable=invalid-name

import os
import sys
sys.path.insert(0, os.path.abspath('../../'))

import inpaint  # pylint: disable=wrong-import-position

project = 'schwarz-inpaint'
copyright = '2026, the schwarz-inpaint developers' # pylint: disable=redefined-builtin
author = 'the schwarz-inpaint developers'

version = release = inpaint.__version__

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.napoleon',
    'sphinx_rtd_theme'
]

# Solver modules are documented numpy style
napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_use_param = False
napoleon_use_rtype = False

autodoc_member_order = 'bysource'
autodoc_typehints = 'description'

master_doc = 'index'
exclude_patterns = ['_build']
html_theme = 'sphinx_rtd_theme'
html_title = 'schwarz-inpaint'
