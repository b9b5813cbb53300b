#!/usr/bin/env python
# -*- coding: utf-8 -*-
# License: 3-clause BSD
import os
from setuptools import setup, find_packages

__version__ = "0.1.0"
NAME = 'histopy'
AUTHOR = "histopy developers"
MAINTAINER = "histopy developers"
EMAIL = ''
KEYWORDS = "histopathology fine-tuning stain-normalization cross-validation"
DESCRIPTION = ("Two-step fine-tuning of histopathology feature extractors "
               "and cross-validated downstream evaluation")
URL = ''
# Data path :
PACKAGE_DATA = {}


def read(fname):
    """Read README and LICENSE."""
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


setup(
    name=NAME,
    version=__version__,
    packages=find_packages(exclude=['examples', 'examples.*']),
    package_dir={'histopy': 'histopy'},
    package_data=PACKAGE_DATA,
    include_package_data=True,
    description=DESCRIPTION,
    long_description=read('README.rst'),
    platforms='any',
    python_requires='>=3.8',
    setup_requires=['numpy'],
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "decorator",
        "joblib",
        "Pillow",
        "matplotlib",
        "tomli; python_version < '3.11'",
    ],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': [
        'histopy = histopy.pipeline.cli:run']},
    author=AUTHOR,
    maintainer=MAINTAINER,
    author_email=EMAIL,
    url=URL,
    license="BSD 3-Clause License",
    keywords=KEYWORDS,
    classifiers=["Development Status :: 3 - Alpha",
                 'Intended Audience :: Science/Research',
                 'Intended Audience :: Developers',
                 'Topic :: Scientific/Engineering :: Medical Science Apps.',
                 'Topic :: Scientific/Engineering :: Image Processing',
                 "Programming Language :: Python :: 3",
                 ])
