"""Torsion of the unit disk: one derivative, four ways.

The minimiser of  int 1/2 |grad u|^2 - u  with u = 0 on the circle is
u = (1 - |x|^2) / 4, so J = pi/16 and dilating the disk changes J at rate
pi/4.  Below, the same number is obtained from the volume form of the
momentum tensor, from the boundary flux, from the min-max form and from
finite differences on deformed meshes.

Run:  python demos/torsion_disk.py [n_boundary]
"""
import sys

import numpy as np

from shapegrad import geometry, integrands
from shapegrad.validation import conservation_residual, cross_check, derive_report
from shapegrad.shapederiv import tensor_A

n = int(sys.argv[1]) if len(sys.argv) > 1 else 128
mesh = geometry.disk(1.0, n)
f, g = integrands.Quadratic(2), integrands.Linear(1.0)
V = geometry.dilation(mesh)

report, sol, dual = derive_report(mesh, f, g, "D", V, fd_schedule=[2e-2, 1e-2, 5e-3])
print(f"mesh: {mesh.nv} vertices, {mesh.ns} triangles, h = {mesh.h:.4f}")
print(f"J primal = {report.J_primal:.6f}   J dual = {report.J_dual:.6f}   pi/16 = {np.pi / 16:.6f}")
for name, value in report.derivative_values().items():
    print(f"  {name:22s} {value:.6f}   rel. error vs pi/4: {abs(value / (np.pi / 4) - 1):.2e}")

# the same tensor is divergence free in the interior
cons = conservation_residual(tensor_A(sol, dual, f, g))
print(f"interior conservation residual: max {cons.max:.2e} over {cons.probe_count} probes")
print("cross check:", "passed" if cross_check(report).passed else "FAILED")
