# django-mesolab documentation build configuration file.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

from mesolab import __version__  # noqa: E402

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.todo",
    "sphinx.ext.coverage",
    "sphinx.ext.viewcode",
    "sphinx.ext.intersphinx",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "django-mesolab"

version = ".".join(__version__.split(".")[:2])
release = __version__

exclude_patterns = ["_build"]
pygments_style = "sphinx"

html_theme = "alabaster"
html_static_path = []
htmlhelp_basename = "django-mesolabdoc"

latex_documents = [
    ("index", "django-mesolab.tex", "django-mesolab Documentation", "", "manual"),
]

man_pages = [
    ("index", "django-mesolab", "django-mesolab Documentation", [], 1),
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "django": ("https://docs.djangoproject.com/en/stable/", "https://docs.djangoproject.com/en/stable/_objects/"),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}
