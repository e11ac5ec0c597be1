from setuptools import find_packages, setup

setup(
    name="CornerLab",
    version="0.1.0",
    author="Daniel Sinkin",
    author_email="danielsinkin97@gmail.com",
    description="Finite-field laboratory for counting corners generated by rational functions",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    include_package_data=True,
    install_requires=open("requirements.txt").read().splitlines(),
    extras_require={"test": ["pytest>=7.0.0"]},
    entry_points={"console_scripts": ["corner-lab=corner_lab.cl_cli:main"]},
    python_requires=">=3.10",
)
