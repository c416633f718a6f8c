"""A shape derivative that is not linear in the velocity.

On (0, a) with f = |u'| and g = (1 - u)_+ and relaxed boundary values, the
minimum is min(2, a).  At a = 2 every constant u = lam in [0, 1] is optimal,
and the one-sided derivative is (V(0) - V(2))_+: moving the endpoints
towards each other costs, moving them apart gains nothing.

The min-max form over the family of constant minimisers reproduces this
exactly; finite differences of the discrete relaxed problem (solved as a
linear program) agree.

Run:  python demos/one_dimensional_nonlinearity.py
"""
import numpy as np

from shapegrad import exact1d, geometry
from shapegrad.shapederiv import minmax_form
from shapegrad.validation import fd_quotient

mesh = geometry.interval(0.0, 2.0, 800)
x = mesh.vertices[:, 0]
f, g = exact1d.integrands()
family = exact1d.relaxed_solution_family(np.linspace(0.0, 1.0, 5), mesh)
duals = [exact1d.dual_field(mesh)]

print(f"J((0, a)) for a = 0.5, 1, 2, 3: {[exact1d.m_exact(a) for a in (0.5, 1, 2, 3)]}")
print(f"{'V(0)':>6} {'V(2)':>6} {'exact':>7} {'min-max':>8} {'fd':>8} {'argmax lam':>10}")
for V0, V2 in [(1, 0), (0, 1), (-1, 0), (0, -1), (0.5, 0.5)]:
    V = geometry.VelocityField(V0 + (V2 - V0) * x / 2)
    res = minmax_form(family, duals, f, g, V)
    q = fd_quotient(mesh, f, g, "N", V, 1e-3, solver=exact1d.relaxed_J)
    lam = family[res.argpair[0]].dof[0]
    print(f"{V0:6.2f} {V2:6.2f} {exact1d.jprime_exact(V0, V2):7.3f} {res.value:8.3f} {q:8.3f} {lam:10.2f}")

# J'(V) + J'(-V) = 0 would hold for a linear derivative
print("J'(V) + J'(-V) for V(0)=1, V(2)=0:",
      exact1d.jprime_exact(1, 0) + exact1d.jprime_exact(-1, 0))
