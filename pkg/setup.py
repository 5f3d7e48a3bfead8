#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""The setup script."""

from setuptools import setup, find_packages

with open('README.rst') as readme_file:
    readme = readme_file.read()

with open('HISTORY.rst') as history_file:
    history = history_file.read()

requirements = [
    'numpy>=1.20',
    'scikit-learn>=1.0',
]

setup_requirements = []

test_requirements = [
    'pytest',
]

setup(
    name='dynstg_mamba',
    version='0.1.0',
    description="Dynamic spatio-temporal graph state-space models for "
                "skeleton gait classification, with relational distillation",
    long_description=readme + '\n\n' + history,
    author="DynSTG-Mamba developers",
    packages=find_packages(include=['dynstg_mamba']),
    include_package_data=True,
    install_requires=requirements,
    python_requires='>=3.8',
    entry_points={
        'console_scripts': [
            'dynstg-mamba=dynstg_mamba.cli:main',
        ],
    },
    license="BSD license",
    zip_safe=False,
    keywords='gait skeleton graph state-space distillation',
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    test_suite='tests',
    tests_require=test_requirements,
    setup_requires=setup_requirements,
)
