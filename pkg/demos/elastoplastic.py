"""Elastoplastic torsion: a nonsmooth integrand and its shape derivative.

With f(z) = |z| for |z| < 1 and (|z|^2 + 1)/2 beyond, the torsion load lam
must exceed 2 before anything moves on the unit disk: below it the minimiser
is u = 0 and J = 0.  Above it the solution has a flat core of radius 2/lam,
J(lam) = pi lam^2/16 - pi/2 + pi/lam^2 and the dilation derivative is
pi (lam^2 - 4) / 4.

The solver smooths f by Moreau envelopes with a decreasing parameter; the
dual field is then chosen inside the unit ball on the flat core so that its
divergence matches the load.

Run:  python demos/elastoplastic.py
"""
import numpy as np

from shapegrad import geometry, integrands
from shapegrad.validation import derive_report

mesh = geometry.disk(1.0, 96)
f = integrands.NonsmoothTorsion(2)
V = geometry.dilation(mesh)

print(f"{'lam':>4} {'J':>10} {'J exact':>10} {'volume':>9} {'boundary':>9} {'exact':>9} {'gap':>9}")
for lam in (1.0, 2.0, 3.0, 4.0):
    g = integrands.Linear(lam)
    rep, sol, dual = derive_report(mesh, f, g, "D", V, minmax=False)
    J_exact = np.pi * lam ** 2 / 16 - np.pi / 2 + np.pi / lam ** 2 if lam > 2 else 0.0
    dJ_exact = np.pi * (lam ** 2 - 4) / 4 if lam > 2 else 0.0
    print(f"{lam:4.1f} {rep.J_primal:10.5f} {J_exact:10.5f} {rep.volume_form_value:9.4f} "
          f"{rep.boundary_form_value:9.4f} {dJ_exact:9.4f} {rep.extra['duality_gap']:9.1e}")
