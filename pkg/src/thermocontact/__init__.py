"""2-D finite-element simulation of adhesive, frictional, thermally coupled
contact between two visco-elastic bodies.

The library discretises two bodies glued along a damageable interface with
P1 triangles (doubled nodes along the glue line), and advances the coupled
displacement / interfacial-slip / delamination / temperature system with a
three-stage staggered scheme whose sub-problems are convex.  An optional
poro-visco-elastic layer adds diffusant contents and chemical potentials.

Typical use::

    from thermocontact import geometry, assembly, stepper, scenarios

    scn = scenarios.friction_heating()
    traj = stepper.run(scn)
    print(traj.ledger.rows[-1])
"""

from . import (  # noqa: F401
    geometry,
    materials,
    assembly,
    energetics,
    solvers,
    stepper,
    poro,
    scenarios,
    config,
)

__version__ = "0.1.0"
