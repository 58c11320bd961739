#!/usr/bin/env python
# -*- coding: utf-8 -*-
import io
import os

from setuptools import find_packages, setup

NAME = 'idsakit'
DESCRIPTION = 'idsakit, spherically symmetric neutrino transport and its diffusion-source approximation'
LICENSE = 'MIT'

here = os.path.abspath(os.path.dirname(__file__))
with io.open(os.path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = '\n' + f.read()

required = [
    'Django>=3.2',
    'environs>=9.2.0',
    'numpy>=1.20',
    'pyexcel>=0.6.6',
    'python-dotenv>=0.15.0',
    'scipy>=1.6',
]

setup(
    name=NAME,
    use_scm_version=True,
    setup_requires=['setuptools_scm'],
    description=DESCRIPTION,
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=('*.tests',)),
    entry_points={
        'console_scripts': [
            'idsakit = app.idsakit.idsakit:main'
        ]
    },
    python_requires='>=3.8',
    install_requires=required,
    extras_require={
        'test': ['coverage>=5.0', 'flake8>=3.8', 'unittest-xml-reporting>=3.0'],
    },
    include_package_data=True,
    license=LICENSE,
    classifiers=[
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering :: Physics',
    ],
)
