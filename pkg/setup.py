from setuptools import setup, find_packages

long_description = '''
A Python package that computes Cramer-Rao lower bounds (CRLBs) for positioning a terminal with a large intelligent surface (LIS): a disk-shaped radiating aperture in the z=0 plane. Fisher information comes from adaptive quadrature over the disk, from closed forms for a terminal on the central perpendicular line, or from a brute-force sum over discrete half-wavelength elements.

## Usage

```python
import lis_crlb as lis

scenario = lis.Scenario(lis.Terminal(1.0, 1.0, 8.0), (lis.Panel(0.5),), lam=0.1)

report = lis.crlb_from_fisher(lis.fisher_numeric(scenario))
print(report.c_x, report.c_y, report.c_z)

approx = lis.crlb_approx_noncpl(scenario.terminal, 0.5, 0.1)
```

The same computations are available from the command line, writing CSV:

```shell
lis_crlb cpl-sweep --z0 4 --lambda 0.1 --out cpl.csv
lis_crlb deploy --preset fig12 --seed 7 --workers 4
lis_crlb validate
```
'''


setup(
    name='lis_crlb',
    packages=find_packages(exclude=['tests']),
    version='0.1.0',
    description="Cramer-Rao lower bounds for positioning with large intelligent surfaces.",
    long_description=long_description,
    long_description_content_type='text/markdown',
    keywords=['cramer-rao', 'fisher information', 'positioning', 'intelligent surface'],
    classifiers=[],
    license='MIT',
    entry_points={
        'console_scripts': ['lis_crlb=lis_crlb.lis:cmd'],
    },
    python_requires='>=3.7',
    include_package_data=True,
    install_requires=['tqdm', 'numpy', 'scipy'],
    extras_require={'test': ['pytest']},
)
