"""Low-order nonconforming de Rham complex on tetrahedral meshes and a
decoupled mixed finite element solver for the fourth-order elliptic
singular perturbation problem."""

__version__ = "0.1.0"
