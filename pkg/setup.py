"""
Setup for the gridtopo module: admittance matrix estimation for power
grids under Laplacian constraints, with a synthetic-data and Monte-Carlo
harness around it.
"""

import setuptools

with open('requirements.txt', encoding='utf-8') as f:
    requirements = [line.strip() for line in f.readlines()]

with open('README.md', encoding='utf-8') as f:
    long_description = f.read()

setuptools.setup(
    name='gridtopo',
    version='0.1.0',
    description='Laplacian-constrained admittance matrix estimation',
    long_description=long_description,
    long_description_content_type='text/markdown',
    license='MIT',
    packages=[
        'gridtopo',
        *['gridtopo.' + p for p in sorted(setuptools.find_packages('./gridtopo'))],
    ],
    package_data={'gridtopo': ['cases/*.csv']},
    include_package_data=True,
    zip_safe=False,
    scripts=[],
    install_requires=requirements,
    python_requires='>=3.10',
    keywords=['power systems', 'topology identification', 'graph laplacian'],
    classifiers=[
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: English',
        'Operating System :: MacOS :: MacOS X',
        'Operating System :: POSIX',
        'Operating System :: Unix',
        'Programming Language :: Python',
        'Topic :: Scientific/Engineering',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    entry_points={
        'console_scripts': [
            'gridtopo = gridtopo.cli:main',
        ],
    },
)
