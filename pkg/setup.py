from setuptools import setup, find_packages

with open('README.md', 'r', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='beacon-search',
    version='0.1.0',
    description='Novelty search over black-box outcome spaces with multi-output GP Thompson sampling',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(include=['beacon_models', 'beacon_models.*', 'beacon_search', 'beacon_search.*']),
    package_data={'beacon_search': ['config/*.yaml']},
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.22',
        'scipy>=1.9',
        'pyyaml>=6.0',
        'matplotlib>=3.5',
    ],
    extras_require={
        'test': ['pytest>=7.0'],
    },
    entry_points={
        'console_scripts': ['beacon-search=beacon_search.cli:main'],
    },
)
