"""Numerical lab for the perturbed complex Monge-Ampere (Hessian quotient)
Dirichlet problem on C-convex rings."""

__version__ = "0.1.0"
