from setuptools import setup, find_packages

setup(
    name="nlos-strobe",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24.3",
        "scipy>=1.10.0",
        "pydantic>=2.5.3",
        "pyyaml>=6.0.0",
        "psutil>=5.9.0",
    ],
    entry_points={
        "console_scripts": ["nlos-strobe=src.cli:main"],
    },
    python_requires=">=3.8",
)
