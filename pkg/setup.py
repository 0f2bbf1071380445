from setuptools import setup

setup(
    name="leastangle",
    version="0.1.0",
    description="Least angle regression paths, logistic variants and shrinkage selection.",
    py_modules=["dataset", "cholesky", "lars", "lalr", "shooting", "selection", "boost", "cli"],
    python_requires=">=3.8",
    install_requires=["numpy>=1.20", "scipy>=1.7", "pandas>=1.5", "scikit-learn>=1.0"],
    extras_require={"test": ["pytest>=7"]},
    entry_points={"console_scripts": ["leastangle = cli:main"]},
)
