#  /*******************************************************************************
#   * Copyright 2025 -- 2026 The capacity-dejavu Authors
#   *
#   * Licensed under the Apache License, Version 2.0 (the "License");
#   * you may not use this file except in compliance with the License.
#   * You may obtain a copy of the License at
#   *
#   *     http://www.apache.org/licenses/LICENSE-2.0
#   *
#   * Unless required by applicable law or agreed to in writing, software
#   * distributed under the License is distributed on an "AS IS" BASIS,
#   * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   * See the License for the specific language governing permissions and
#   * limitations under the License.
#  *******************************************************************************/
#

from setuptools import setup
import os
import re

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))


def read(*path):
    return open(os.path.join(*path), encoding="utf8").read()


def read_requirements(filename):
    return [
        l.split("#")[0].strip()
        for l in read(PROJECT_ROOT, filename).splitlines()
        if len(l.split("#")[0].strip()) > 0
    ]


def find_version(filepath: str) -> str:
    """Extract version information from the given filepath."""
    with open(filepath) as fp:
        version_match = re.search(
            r"^__version__ = ['\"]([^'\"]*)['\"]", fp.read(), re.M
        )
        if version_match:
            return version_match.group(1)
        raise RuntimeError("Unable to find version string.")


setup(
    name="capacity_dejavu",
    version=find_version(os.path.join(PROJECT_ROOT, "capacity_dejavu/__init__.py")),
    description="Exact and threshold capacity allocation for queues whose jobs carry a preferred service period.",
    long_description=read(PROJECT_ROOT, "README.md"),
    long_description_content_type="text/markdown",
    python_requires=">=3.9",
    packages=["capacity_dejavu"],
    install_requires=["numpy>=1.23.3", "scipy>=1.12", "pandas>=1.5"],
    extras_require={"numba": read_requirements("requirements-opt.txt")},
    entry_points={"console_scripts": ["capacity-dejavu=capacity_dejavu.cli:main"]},
)
