from setuptools import setup, find_packages

setup(
    name="dtd_landmarks",
    version="0.1",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy",
        "pandas",
        "pydantic>=2",
        "python-dotenv",
        "matplotlib",
        "Pillow",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["dtd-landmarks=dtd_landmarks.harness.cli:main"]},
    python_requires=">=3.9",
)
