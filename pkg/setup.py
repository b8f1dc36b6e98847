#!/usr/bin/env python
from setuptools import setup, find_packages
import os

__doc__ = """Django app for numerical experiments on mesoscopic fluctuations of orthogonal polynomial ensembles."""

version = "0.1.0.dev0"


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


setup(
    name="django-mesolab",
    version=version,
    description=__doc__,
    long_description=read("README.rst"),
    packages=[
        package for package in find_packages() if package.startswith("mesolab")
    ],
    install_requires=["Django>=4.2", "numpy>=1.24", "scipy>=1.11"],
    entry_points={"console_scripts": ["mesolab = mesolab.__main__:main"]},
    zip_safe=False,
    include_package_data=True,
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Framework :: Django",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: BSD License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
