# coding: utf-8

from os.path import dirname, abspath, exists

from setuptools import setup, find_packages  # noqa: H301

NAME = "ddspme-lab"

# To install the library, run the following
#
# pip install .
#
# and for the test tooling
#
# pip install .[dev]

DEV_REQUIRES = ["pytest>=7.0"]

from pip._internal.req import parse_requirements


def load_requirements(file_name):
    requirements = parse_requirements(file_name, session=False)
    return [str(req.requirement) for req in requirements]


DIR_PATH = dirname(abspath(__file__))

with open(DIR_PATH + "/VERSION", "r", encoding="utf-8") as f:
    VERSION = f.readline().strip()

LONG_DESCRIPTION = None
if exists(DIR_PATH + "/README.md"):
    with open(DIR_PATH + "/README.md", "r", encoding="utf-8") as f:
        LONG_DESCRIPTION = f.read()

setup(
    name=NAME,
    packages=find_packages(exclude=["test", "test.*"]),
    version=VERSION,
    description="Numerical lab for distribution dependent stochastic porous media equations",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    author="",
    author_email="",
    install_requires=load_requirements(DIR_PATH + "/requirements.txt"),
    extras_require={"dev": DEV_REQUIRES},
    python_requires=">=3.9",
    include_package_data=True,
    package_data={
        'DATA': ['demo_config.json', 'viscosity_sweep.json', 'regularization_sweep.json'],
    },
    entry_points={
        'console_scripts': ['ddspme = ddspme.harness.cli:main'],
    },
)
