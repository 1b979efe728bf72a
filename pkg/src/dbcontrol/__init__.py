"""Energy-regularized Dirichlet boundary control on graded meshes."""

__version__ = "0.1.0"
