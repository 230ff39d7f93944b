"""hamforge: exact symbolic search and certification of Hamiltonian operators
for quasilinear first-order systems of conservation laws.

The package is organized around a small exact-arithmetic expression core
(`hamforge.expr`), jet-space calculus (`hamforge.jet`), tensor geometry on the
manifold of field variables (`hamforge.geometry`), weakly nonlocal operators
(`hamforge.operators`), the Schouten bracket engine (`hamforge.schouten`),
exact linear algebra over Q (`hamforge.linsolve`), condition checkers and
search pipelines (`hamforge.conditions`) and the user-facing system
generation, sessions and CLI (`hamforge.systems`, `hamforge.session`,
`hamforge.cli`).
"""

__version__ = "0.1.0"
