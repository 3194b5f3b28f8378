#!/usr/bin/env python
from setuptools import setup, find_packages

# Get long description from README.md
with open("README.md", encoding="utf-8") as f:
    long_description = f.read()

# Get version from bonnet_geometry/__init__.py without importing numpy
about = {}
with open("bonnet_geometry/__init__.py", encoding="utf-8") as f:
    for line in f:
        if line.startswith(("__version__", "__author__")):
            exec(line, about)

# Define package dependencies
requirements = [
    "numpy>=1.20.0",
    "scipy>=1.8.0",
    "sympy>=1.10",
    "pyyaml>=6.0",
]

# Optional dependencies
extras_require = {
    "dev": [
        "pytest>=7.0.0",
        "hypothesis>=6.0.0",
        "black>=23.1.0",
        "isort>=5.12.0",
        "flake8>=6.0.0",
    ]
}

setup(
    name="bonnet-geometry",
    version=about["__version__"],
    description="Minimal surfaces in S^3 from their normal curvature, and type-number-two hypersurfaces",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author=about["__author__"],
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    include_package_data=True,
    install_requires=requirements,
    extras_require=extras_require,
    entry_points={
        "console_scripts": [
            "bonnet=bonnet_geometry.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.8",
)
