#!/usr/bin/env python3
"""
kron-gemini setup script
Packages the estimators, the evaluation harness and the kron-gemini command
"""

import os
from setuptools import setup, find_packages

HERE = os.path.dirname(os.path.abspath(__file__))


def read_requirements(name: str):
    """Pinned requirements, comments and blank lines skipped"""
    with open(os.path.join(HERE, name)) as f:
        return [line.strip() for line in f if line.strip() and not line.startswith("#")]


setup(
    name="kron-gemini",
    version="0.1.0",
    description="Gemini and noniterative flip-flop estimators of sparse Kronecker covariances",
    packages=find_packages(exclude=("tests", "tests.*")),
    python_requires=">=3.9",
    install_requires=read_requirements("requirements.txt"),
    extras_require={"test": read_requirements("requirements-test.txt")},
    entry_points={"console_scripts": ["kron-gemini=kron_gemini.cli:main"]},
)
