from setuptools import setup, find_packages

VERSION = "0.1.0"
DESCRIPTION = "Dual-scale Hessian vessel segmentation of MR angiography volumes."

setup(
    name="mravessel",
    version=VERSION,
    author="fengqimin",
    author_email="fengqimin@msn.com",
    python_requires=">=3.10",
    description=DESCRIPTION,
    long_description_content_type="text/markdown",
    long_description=open("readme.md", encoding="UTF8").read(),
    packages=find_packages(exclude=["tests", "tests.*"]),
    keywords=["python", "mra", "vessel segmentation", "hessian", "nifti"],
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "nibabel>=4.0",
        "ujson~=5.8",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": [
            "mravessel = mravessel.cli:main",
        ],
    },
    license="MIT",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
    ],
)
