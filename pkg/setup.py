#!/usr/bin/env python
"""
Setup script for the Yang-Mills-Dirac simulator and verification workbench
"""

from setuptools import setup, find_packages
import os
import sys

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

# Read requirements
with open('requirements.txt') as f:
    requirements = f.read().splitlines()

# Get version
__version__ = '1.0.0'

setup(
    name="ymd-workbench",
    version=__version__,
    description="Pseudospectral Yang-Mills-Dirac simulator in temporal gauge on the 3-torus",
    packages=find_packages(exclude=["tests", "tests.*"]),
    py_modules=["main"],
    install_requires=requirements,
    extras_require={
        'test': ['pytest>=7.0'],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    entry_points={
        'console_scripts': [
            'ymd=main:main',
        ],
    },
    python_requires='>=3.8',
    keywords="yang-mills, dirac, pseudospectral, gauge theory, null forms",
)
