"""Setup script for the project."""
from setuptools import setup, find_packages

setup(
    name="nested-enkf",
    version="0.1.0",
    description="Sequential Bayesian parameter inference for SDE models with nested ensemble Kalman filters",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "python-dotenv>=1.0.0",
        "pydantic>=2.0.0",
        "pydantic-settings>=2.0.0",
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "pandas>=2.0.0",
        "joblib>=1.3.0",
        "tqdm>=4.66.0",
        "python-json-logger>=2.0.7",
        "tomli>=2.0.0; python_version < '3.11'",
    ],
    extras_require={
        "test": ["pytest>=7.4.0", "pytest-cov>=4.1.0", "pytest-mock>=3.11.0"],
    },
    entry_points={
        "console_scripts": ["nenkf=src.cli.main:main"],
    },
    python_requires=">=3.10",
)
