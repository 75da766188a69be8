from pathlib import Path
from typing import Union

import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()


def read_requirements(path: Union[str, Path]):
    with open(path, "r") as file:
        return [line for line in file.read().splitlines() if line.strip()]


requirements = read_requirements("requirements.txt")
requirements_dev = read_requirements("requirements_dev.txt")

setuptools.setup(
    name="nmpec",
    version="0.3.0",
    author="nmpec developers",
    description="Probabilistic error cancellation of non-Markovian noise: simulator, bounds and overhead sweeps",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(include=["nmpec", "nmpec.*"]),
    include_package_data=True,
    package_data={"nmpec": ["configs/*.yaml"]},
    install_requires=requirements,
    entry_points={
        'console_scripts': [
            'nmpec = nmpec.cli:main',
        ],
    },
    extras_require={"dev": requirements_dev},
    python_requires=">=3.9",
    classifiers=[
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Physics",
    ],
)
