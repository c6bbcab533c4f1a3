"""2D Helmholtz FEM-BEM library with substructured optimized Schwarz solvers.

Subpackages cover complex linear algebra, conforming triangular meshes with
non-overlapping partitions, P1 finite element and boundary element assembly,
impedance (transmission) operators, the substructured skeleton iteration, and
an experiment harness with a CLI.
"""

__version__ = "0.1.0"
