"""Simulation engine for a thermo-viscoelastic body in adhesive contact.

Subpackages are organized by responsibility: `proximal` (scalar regularized
nonlinearities), `mesh` (discrete geometry and spaces), `assembly` (weak-form
residuals and energies), `stepper` (time integration), `stationary`
(equilibrium solver), `diagnostics` (runtime monitors), `cli` (batch tool).
"""

__version__ = "0.1.0"
